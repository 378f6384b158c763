import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smqc import circuit, protocol, qsim
from smqc.circuit import Cnot, LocalMeasure, OwnershipMap, SingleQubit
from smqc.protocol import COMMITMENT, CLASSICAL, QUBIT_TRANSFER, NlCnotHooks, QotpKey

BRANCHES = list(itertools.product(qsim.ALL_BELL_OUTCOMES, repeat=2))


def all_branches(joint, c, t, **kw):
    rng = np.random.default_rng(0)
    for br in BRANCHES:
        yield protocol.nl_cnot(joint, c, t, rng, branch=br, **kw)


class TestNlCnot:
    def test_one_zero_gives_one_one(self):
        joint = qsim.basis_state(2, 2)
        for out, _ in all_branches(joint, 0, 1):
            assert qsim.phase_equal(out, qsim.basis_state(2, 3))[0]

    def test_plus_zero_gives_bell_pair(self):
        joint = qsim.ket("+").tensor(qsim.ket("0"))
        for out, _ in all_branches(joint, 0, 1):
            assert qsim.phase_equal(out, qsim.bell_state(0, 0))[0]

    def test_random_pairs_every_branch(self, rng):
        for _ in range(10):
            joint = qsim.random_state(rng).tensor(qsim.random_state(rng))
            ref = qsim.cnot(joint, 0, 1)
            for out, _ in all_branches(joint, 0, 1):
                assert qsim.overlap(out, ref) >= 1 - 1e-10

    def test_embedded_in_larger_register(self, rng):
        joint = qsim.random_state(rng, 4)
        ref = qsim.cnot(joint, 3, 1)
        for out, _ in all_branches(joint, 3, 1):
            assert out.num_qubits == 4
            assert qsim.overlap(out, ref) >= 1 - 1e-10

    def test_bob_as_preparer(self, rng):
        joint = qsim.random_state(rng, 2)
        ref = qsim.cnot(joint, 0, 1)
        for out, tr in all_branches(joint, 0, 1, hooks=NlCnotHooks(preparer="bob")):
            assert qsim.overlap(out, ref) >= 1 - 1e-10
            (xfer,) = tr.of_kind(QUBIT_TRANSFER)
            assert (xfer.sender, xfer.receiver) == (1, 0)
            assert tr.transferred_qubits() == [2, 3]

    def test_without_corrections_it_breaks(self, rng):
        joint = qsim.random_state(rng).tensor(qsim.random_state(rng))
        ref = qsim.cnot(joint, 0, 1)
        worst = min(qsim.overlap(out, ref) for out, _ in all_branches(joint, 0, 1, apply_corrections=False))
        assert worst < 0.99

    def test_transcript_is_minimal(self, rng):
        joint = qsim.random_state(rng, 2)
        _, tr = protocol.nl_cnot(joint, 0, 1, rng, parties=(2, 5))
        msgs = tr.messages()
        assert [e.kind for e in msgs].count(COMMITMENT) == 4
        assert [e.kind for e in msgs].count(QUBIT_TRANSFER) == 1
        assert not tr.of_kind(CLASSICAL)
        assert {(e.sender, e.receiver) for e in msgs} <= {(2, 5), (5, 2)}
        assert tr.transferred_qubits() == [4, 5]  # the two ancillas of the far pair

    def test_exchanged_bits_are_ax_and_bz(self, rng):
        joint = qsim.random_state(rng, 2)
        for (oa, ob) in BRANCHES:
            _, tr = protocol.nl_cnot(joint, 0, 1, rng, branch=(oa, ob))
            assert protocol.exchanged_bits(tr) == [(oa.x, ob.z)]

    def test_sampled_outcomes_are_roughly_uniform(self):
        rng = np.random.default_rng(11)
        joint = qsim.ket("0").tensor(qsim.ket("+"))
        counts = np.zeros(4)
        for _ in range(2000):
            _, tr = protocol.nl_cnot(joint, 0, 1, rng)
            x, z = tr.of_kind(protocol.MEASUREMENT)[0].payload
            counts[2 * x + z] += 1
        assert np.all(np.abs(counts / 2000 - 0.25) < 0.04)

    def test_same_control_and_target_rejected(self, rng):
        with pytest.raises(qsim.QuantumStateError):
            protocol.nl_cnot(qsim.basis_state(2), 1, 1, rng)


class TestQotp:
    def test_zero_key_is_identity(self, rng):
        s = qsim.random_state(rng, 2)
        np.testing.assert_allclose(protocol.qotp_encrypt(s, 1, QotpKey(0, 0)).amplitudes, s.amplitudes)

    @pytest.mark.parametrize("a,b", list(itertools.product((0, 1), repeat=2)))
    def test_roundtrip(self, rng, a, b):
        s = qsim.random_state(rng, 1)
        back = protocol.qotp_decrypt(protocol.qotp_encrypt(s, 0, QotpKey(a, b)), 0, QotpKey(a, b))
        assert qsim.phase_equal(back, s)[0]

    def test_average_over_keys_is_maximally_mixed(self):
        rho = sum(
            qsim.partial_trace(protocol.qotp_encrypt(qsim.ket("0"), 0, QotpKey(a, b)), [0])
            for a, b in itertools.product((0, 1), repeat=2)
        ) / 4
        np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-12)

    def test_key_bits_validated(self):
        with pytest.raises(ValueError):
            QotpKey(2, 0)


class TestTtp:
    def test_zero_keys(self):
        post, keys = protocol.ttp_nl_cnot(qsim.basis_state(2, 2), 0, 1, QotpKey(0, 0), QotpKey(0, 0))
        assert keys == (QotpKey(0, 0), QotpKey(0, 0))
        np.testing.assert_allclose(post.amplitudes, [0, 0, 0, 1])

    @pytest.mark.parametrize("a,b,c,d", list(itertools.product((0, 1), repeat=4)))
    def test_key_update_identity(self, a, b, c, d):
        kc, kt = protocol.cnot_key_update(QotpKey(a, b), QotpKey(c, d))
        lhs = qsim.CNOT @ np.kron(qsim.pauli_power(a, b), qsim.pauli_power(c, d))
        rhs = np.kron(qsim.pauli_power(kc.a, kc.b), qsim.pauli_power(kt.a, kt.b)) @ qsim.CNOT
        sign = np.trace(rhs.conj().T @ lhs) / 4
        assert abs(abs(sign) - 1) <= 1e-12
        np.testing.assert_allclose(lhs, sign * rhs, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_keys_and_inputs(self, seed):
        rng = np.random.default_rng(seed)
        joint = qsim.random_state(rng, 2)
        kc, kt = QotpKey.random(rng), QotpKey.random(rng)
        enc = protocol.qotp_encrypt(protocol.qotp_encrypt(joint, 0, kc), 1, kt)
        post, (kc2, kt2) = protocol.ttp_nl_cnot(enc, 0, 1, kc, kt)
        dec = protocol.qotp_decrypt(protocol.qotp_decrypt(post, 0, kc2), 1, kt2)
        assert qsim.overlap(dec, qsim.cnot(joint, 0, 1)) >= 1 - 1e-10


def schedule_for(ops, own):
    return circuit.build_schedule(ops, own)


class TestRunSmqc:
    def test_no_nonlocal_rounds_means_no_messages(self, rng):
        own = OwnershipMap(2, (0, 0, 1))
        ops = [SingleQubit(qsim.H, 0), Cnot(0, 1), SingleQubit(qsim.T, 2)]
        (res,) = protocol.run_smqc(schedule_for(ops, own), qsim.random_state(rng, 3), mode="exhaustive")
        assert res.transcript.messages() == []

    def test_matches_oracle_on_every_branch(self, rng):
        for _ in range(3):
            ops, own = circuit.random_circuit(rng, nonlocal_cnots=2)
            inp = qsim.random_state(rng, own.num_qubits)
            ref, _ = circuit.oracle_simulate(ops, inp)
            results = protocol.run_smqc(schedule_for(ops, own), inp, mode="exhaustive", seed=3)
            assert len(results) == 256
            for res in results:
                assert qsim.overlap(res.state, ref) >= 1 - 1e-9

    def test_ttp_backend_agrees(self, rng):
        ops, own = circuit.random_circuit(rng, nonlocal_cnots=3)
        inp = qsim.random_state(rng, own.num_qubits)
        (peer,) = protocol.run_smqc(schedule_for(ops, own), inp, seed=9)
        (ttp,) = protocol.run_smqc(schedule_for(ops, own), inp, seed=9, backend="ttp")
        assert qsim.overlap(peer.state, ttp.state) >= 1 - 1e-9

    def test_ttp_transcript_routes_through_ttp(self, rng):
        own = OwnershipMap(2, (0, 1))
        (res,) = protocol.run_smqc(schedule_for([Cnot(0, 1)], own), qsim.random_state(rng, 2), backend="ttp")
        assert all(protocol.TTP in (e.sender, e.receiver) for e in res.transcript.messages())

    def test_measurement_branches_match_forced_oracle(self, rng):
        own = OwnershipMap(2, (0, 0, 1))
        ops = [SingleQubit(qsim.H, 0), Cnot(0, 2), LocalMeasure((0, 1)), SingleQubit(qsim.H, 2), Cnot(2, 1)]
        inp = qsim.random_state(rng, 3)
        results = protocol.run_smqc(schedule_for(ops, own), inp, mode="exhaustive")
        # branch = (gadget 1, local bits, gadget 2); local probabilities sum to one per gadget pair
        per_gadget = {}
        for r in results:
            key = (r.branch[0], r.branch[2])
            per_gadget[key] = per_gadget.get(key, 0) + r.measurement_probability
        assert len(per_gadget) == 256
        assert all(v == pytest.approx(1, abs=1e-12) for v in per_gadget.values())
        for res in results:
            (bits,) = res.bits[0]
            ref, _ = circuit.oracle_simulate(ops, inp, [bits])
            assert qsim.overlap(res.state, ref) >= 1 - 1e-9

    def test_per_party_inputs(self):
        own = OwnershipMap(2, (1, 0, 1))
        inputs = {0: qsim.ket("1"), 1: qsim.ket("0").tensor(qsim.ket("1"))}
        joint = protocol.assemble_input(own, inputs)
        np.testing.assert_allclose(joint.amplitudes, qsim.basis_state(3, 0b011).amplitudes)
        with pytest.raises(qsim.QuantumStateError):
            protocol.assemble_input(own, {0: qsim.basis_state(2)})

    def test_locality(self, rng):
        ops, own = circuit.random_circuit(rng, nonlocal_cnots=3)
        (res,) = protocol.run_smqc(schedule_for(ops, own), qsim.random_state(rng, own.num_qubits), seed=1)
        assert all(q >= own.num_qubits for q in res.transcript.transferred_qubits())

    def test_deterministic_transcripts(self, rng):
        ops, own = circuit.random_circuit(rng, nonlocal_cnots=2)
        inp = qsim.random_state(rng, own.num_qubits)
        a = protocol.run_smqc(schedule_for(ops, own), inp, seed=4)[0].transcript.to_json()
        b = protocol.run_smqc(schedule_for(ops, own), inp, seed=4)[0].transcript.to_json()
        assert a == b

    def test_transcript_json_roundtrip(self, rng):
        own = OwnershipMap(2, (0, 1))
        (res,) = protocol.run_smqc(schedule_for([Cnot(0, 1)], own), qsim.random_state(rng, 2))
        records = json.loads(res.transcript.to_json())
        assert set(records[0]) == {"seq", "kind", "from", "to", "payload_hex"}
        assert protocol.Transcript.from_records(records).events == res.transcript.events

    def test_active_strategy_needs_peer_backend(self, rng):
        from smqc.adversary import BitFlip

        own = OwnershipMap(2, (0, 1))
        with pytest.raises(ValueError):
            protocol.run_smqc(schedule_for([Cnot(0, 1)], own), qsim.basis_state(2), backend="ttp",
                              strategies={0: BitFlip()})

    def test_unknown_mode(self):
        own = OwnershipMap(1, (0,))
        with pytest.raises(ValueError):
            protocol.run_smqc(schedule_for([], own), qsim.basis_state(1), mode="bogus")
