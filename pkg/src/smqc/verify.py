"""Self-check battery behind ``smqc verify``.

Each suite is a deterministic function of the seed returning a
``SuiteResult``; the report holds no timings so repeated runs with the same
seed serialize byte-identically.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from . import adversary, circuit, commitment, protocol, qsim


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    metrics: dict = field(default_factory=dict)


def suite_qsim(rng) -> SuiteResult:
    worst_norm = worst_born = worst_tele = worst_schmidt = 0.0
    dm_ok = True
    checks = 0
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        s = qsim.random_state(rng, n)
        if n >= 2 and rng.random() < 0.5:
            q1, q2 = rng.choice(n, size=2, replace=False)
            s = qsim.apply_2q(s, qsim.random_unitary(rng, 4), int(q1), int(q2))
        else:
            s = qsim.apply_1q(s, qsim.random_unitary(rng, 2), int(rng.integers(n)))
        worst_norm = max(worst_norm, abs(s.norm() - 1))
        checks += 1
    for _ in range(100):
        s = qsim.random_state(rng, 3)
        worst_born = max(worst_born, abs(qsim.bell_probabilities(s, 0, 2).sum() - 1))
        psi = qsim.random_state(rng, 1)
        joint = psi.tensor(qsim.bell_state(0, 0))
        for o in qsim.ALL_BELL_OUTCOMES:
            _, post = qsim.bell_measure(joint, 0, 1, o)
            rest = qsim.project_out(post, [0, 1], qsim.bell_state(o.x, o.z))
            expect = qsim.apply_1q(psi, qsim.pauli_power(o.x, o.z), 0)
            worst_tele = max(worst_tele, 1 - qsim.overlap(rest, expect))
        two = qsim.random_state(rng, 2)
        sd = qsim.schmidt_decompose(two)
        worst_schmidt = max(worst_schmidt, np.abs(sd.reconstruct().amplitudes - two.amplitudes).max())
        keep = sorted(rng.choice(3, size=int(rng.integers(1, 3)), replace=False).tolist())
        dm_ok &= qsim.check_density_matrix(qsim.partial_trace(s, keep))
        checks += 7
    ok = (
        worst_norm <= 1e-12
        and worst_born <= 1e-12
        and worst_tele <= 1e-10
        and worst_schmidt <= 1e-10
        and dm_ok
    )
    return SuiteResult(
        "qsim", ok, checks,
        {"norm_dev": worst_norm, "born_dev": worst_born, "teleport_dev": worst_tele,
         "schmidt_err": worst_schmidt, "density_ok": bool(dm_ok)},
    )


def suite_circuit(rng) -> SuiteResult:
    count_ok = order_ok = reject_ok = True
    for _ in range(1000):
        ops, own = circuit.random_circuit(rng, max_gates=30, measurements=True)
        sched = circuit.build_schedule(ops, own)
        n_nl = sum(circuit.is_nonlocal(op, own) for op in ops)
        count_ok &= sched.nl_cnot_count == n_nl
        flat = list(sched.flatten())
        for q in range(own.num_qubits):
            src = [(type(o), o.qubits) for o in ops if q in o.qubits]
            got = [(type(o), o.qubits) for o in flat if q in o.qubits]
            order_ok &= src == got
        a, b = own.qubits_of(0)[0], own.qubits_of(1)[0]
        bad = ops[:]
        bad.insert(int(rng.integers(len(bad) + 1)), circuit.LocalMeasure((a, b)))
        try:
            circuit.build_schedule(bad, own)
            reject_ok = False
        except circuit.InvalidCircuit:
            pass
    return SuiteResult(
        "circuit", bool(count_ok and order_ok and reject_ok), 3000,
        {"count_identity": bool(count_ok), "order_preserved": bool(order_ok),
         "cross_owner_rejected": bool(reject_ok)},
    )


def suite_commitment(rng, forgeries: int = 100_000) -> SuiteResult:
    order_ok = True
    for a, b in itertools.product((0, 1), repeat=2):
        res = commitment.swap_protocol(a, b, rng)
        order_ok &= res.transcript.ordering_ok() and (res.bit_at_b, res.bit_at_a) == (a, b)
    token = commitment.commit(1, commitment.fresh_nonce(rng))
    accepts = 0
    for _ in range(forgeries):
        forged = commitment.Opening(int(rng.integers(2)), commitment.fresh_nonce(rng))
        accepts += commitment.open_verify(token, forged)
    culprit = None
    try:
        commitment.swap_protocol(1, 0, rng, parties=(0, 1), b_cls=commitment.Equivocator)
    except commitment.CheatDetected as exc:
        culprit = exc.culprit
    ok = bool(order_ok) and accepts == 0 and culprit == 1
    return SuiteResult(
        "commitment", ok, 4 + forgeries + 1,
        {"ordering": bool(order_ok), "forged_accepts": accepts, "cheat_culprit": culprit},
    )


def suite_nl_cnot(rng, apply_corrections: bool = True) -> SuiteResult:
    worst = 0.0
    for _ in range(100):
        joint = qsim.random_state(rng).tensor(qsim.random_state(rng))
        ref = qsim.cnot(joint, 0, 1)
        for br in itertools.product(qsim.ALL_BELL_OUTCOMES, repeat=2):
            out, _ = protocol.nl_cnot(joint, 0, 1, rng, branch=br, apply_corrections=apply_corrections)
            worst = max(worst, 1 - qsim.overlap(out, ref))
    return SuiteResult("nl_cnot", worst <= 1e-10, 1600, {"max_deviation": worst})


def suite_ttp(rng) -> SuiteResult:
    worst_op = 0.0
    for a, b, c, d in itertools.product((0, 1), repeat=4):
        lhs = qsim.CNOT @ np.kron(qsim.pauli_power(a, b), qsim.pauli_power(c, d))
        rhs = np.kron(qsim.pauli_power(a, b ^ d), qsim.pauli_power(a ^ c, d)) @ qsim.CNOT
        worst_op = max(worst_op, 1 - abs(np.trace(rhs.conj().T @ lhs)) / 4)
    worst = 0.0
    for _ in range(100):
        joint = qsim.random_state(rng).tensor(qsim.random_state(rng))
        kc, kt = protocol.QotpKey.random(rng), protocol.QotpKey.random(rng)
        enc = protocol.qotp_encrypt(protocol.qotp_encrypt(joint, 0, kc), 1, kt)
        post, (kc2, kt2) = protocol.ttp_nl_cnot(enc, 0, 1, kc, kt)
        dec = protocol.qotp_decrypt(protocol.qotp_decrypt(post, 0, kc2), 1, kt2)
        worst = max(worst, 1 - qsim.overlap(dec, qsim.cnot(joint, 0, 1)))
    return SuiteResult(
        "ttp", worst_op <= 1e-12 and worst <= 1e-10, 116,
        {"identity_dev": worst_op, "roundtrip_dev": worst},
    )


def suite_smqc(rng, apply_corrections: bool = True, circuits: int = 5) -> SuiteResult:
    worst = worst_backend = 0.0
    branches = 0
    for _ in range(circuits):
        ops, own = circuit.random_circuit(rng, max_nonlocal=2)
        sched = circuit.build_schedule(ops, own)
        inp = qsim.random_state(rng, own.num_qubits)
        ref, _ = circuit.oracle_simulate(ops, inp)
        seed = int(rng.integers(2**31))
        for res in protocol.run_smqc(sched, inp, mode="exhaustive", seed=seed, apply_corrections=apply_corrections):
            worst = max(worst, 1 - qsim.overlap(res.state, ref))
            branches += 1
        (ttp,) = protocol.run_smqc(sched, inp, backend="ttp", seed=seed)
        worst_backend = max(worst_backend, 1 - qsim.overlap(ttp.state, ref))
    return SuiteResult(
        "smqc", worst <= 1e-9 and worst_backend <= 1e-9, branches + circuits,
        {"max_deviation": worst, "ttp_deviation": worst_backend},
    )


def suite_adversary(rng) -> SuiteResult:
    ok = True
    for _ in range(10):
        inputs = (qsim.random_state(rng), qsim.random_state(rng))
        _, r1 = adversary.run_rotated_basis_attack(qsim.random_unitary(rng), inputs)
        _, r2 = adversary.run_bit_flip_attack(inputs)
        _, r3 = adversary.run_chi_corruption(adversary.random_clifford(rng), int(rng.choice([2, 3])), inputs)
        ok &= r1.verdict and r2.verdict and r3.verdict
    worst_d = worst_u = 0.0
    for _ in range(100):
        phi, phi_p = qsim.random_state(rng), qsim.random_state(rng)
        sign = "+" if rng.random() < 0.5 else "-"
        worst_d = max(worst_d, adversary.prop1_check(phi, phi_p, sign)[2])
        u1 = adversary.recover_u1(phi, phi_p, sign)
        worst_u = max(worst_u, 1 - adversary.verify_u1(phi, phi_p, u1, sign))
    control = adversary.prop1_check(qsim.ket("0"), qsim.ket("+"), target=qsim.ket("0"))[2]
    ok = bool(ok) and worst_d <= 1e-10 and worst_u <= 1e-10 and control > 0.1
    return SuiteResult(
        "adversary", ok, 230,
        {"prop1_distance": worst_d, "u1_deviation": worst_u, "negative_control": control},
    )


def run_all(seed: int = 42, *, inject_fault: bool = False) -> list[SuiteResult]:
    corrections = not inject_fault
    suites = [
        ("qsim", lambda r: suite_qsim(r)),
        ("circuit", lambda r: suite_circuit(r)),
        ("commitment", lambda r: suite_commitment(r)),
        ("nl_cnot", lambda r: suite_nl_cnot(r, corrections)),
        ("ttp", lambda r: suite_ttp(r)),
        ("smqc", lambda r: suite_smqc(r, corrections)),
        ("adversary", lambda r: suite_adversary(r)),
    ]
    # one child stream per suite so a suite's draws never shift another's
    streams = np.random.SeedSequence(seed).spawn(len(suites))
    return [fn(np.random.default_rng(s)) for (_, fn), s in zip(suites, streams)]


def report_dict(seed: int, results: list[SuiteResult]) -> dict:
    return {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "suites": [asdict(r) for r in results],
    }
