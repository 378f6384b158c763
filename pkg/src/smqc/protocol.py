"""Two-party NL-CNOT protocol, the one-time-pad TTP variant and the SMQC runner.

Register layout during an NL-CNOT round on an ``n``-qubit joint state:
the four resource qubits are appended as ``n .. n+3`` (ancilla 1..4).
Alice (control side) keeps ancillas 1, 2; Bob keeps 3, 4.  After the round
the measured qubits are dropped and ancilla 2 / ancilla 3 take over the
control / target register slots, so the register size never grows.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import qsim
from .circuit import LocalMeasure, LqcRound, NlCnotRound, OwnershipMap, Schedule, apply_op, local_unitary
from .commitment import Channel, SwapParty, swap_protocol
from .qsim import BellOutcome, StateVector

TTP = "ttp"

# event kinds
COMMITMENT = "commitment"
CLASSICAL = "classical"
QUBIT_TRANSFER = "qubit_transfer"
MEASUREMENT = "measurement"
REMAP = "remap"


def _ids(*qubits: int) -> bytes:
    return b"".join(q.to_bytes(2, "big") for q in qubits)


def _unpack_ids(payload: bytes) -> list[int]:
    return [int.from_bytes(payload[i : i + 2], "big") for i in range(0, len(payload), 2)]


@dataclass(frozen=True)
class Event:
    kind: str
    sender: Any
    receiver: Any
    payload: bytes = b""


class Transcript:
    """Append-only, totally ordered record of everything that happened."""

    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = list(events)

    def append(self, kind: str, sender, receiver, payload: bytes = b""):
        self.events.append(Event(kind, sender, receiver, bytes(payload)))

    def copy(self) -> "Transcript":
        return Transcript(self.events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def messages(self) -> list[Event]:
        """Party-to-party traffic (classical or quantum)."""
        return [e for e in self.events if e.kind in (COMMITMENT, CLASSICAL, QUBIT_TRANSFER)]

    def view(self, party) -> "Transcript":
        """What ``party`` sees: traffic addressed to or sent by it, and its own measurements."""
        return Transcript(e for e in self.events if party in (e.sender, e.receiver))

    def transferred_qubits(self) -> list[int]:
        return [q for e in self.of_kind(QUBIT_TRANSFER) for q in _unpack_ids(e.payload)]

    def to_records(self) -> list[dict]:
        return [
            {
                "seq": i,
                "kind": e.kind,
                "from": e.sender,
                "to": e.receiver,
                "payload_hex": e.payload.hex(),
            }
            for i, e in enumerate(self.events)
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=1)

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "Transcript":
        return cls(
            Event(r["kind"], r["from"], r["to"], bytes.fromhex(r["payload_hex"])) for r in records
        )


@dataclass
class NlCnotHooks:
    """Deviations a party may make inside one NL-CNOT round.

    ``corruption`` is applied by the resource preparer to ancilla
    ``corruption_target`` (2 or 3) before it hands the other half over.
    ``alice_basis``/``bob_basis`` rotate the party's data qubit before its
    Bell measurement.  ``*_flip`` sends the complement of the exchanged bit
    while the cheater keeps using the true value for its own correction.
    """

    preparer: str = "alice"
    corruption: np.ndarray | None = None
    corruption_target: int = 3
    alice_basis: np.ndarray | None = None
    bob_basis: np.ndarray | None = None
    alice_flip: bool = False
    bob_flip: bool = False
    alice_swap_cls: type[SwapParty] = SwapParty
    bob_swap_cls: type[SwapParty] = SwapParty


def _record_swap(transcript: Transcript, messages):
    for m in messages:
        transcript.append(COMMITMENT, m.sender, m.receiver, m.encode())


def _prepare_round(joint, control, target, parties, hooks, transcript) -> StateVector:
    """Steps shared by every measurement branch: resource hand-over and basis rotations."""
    alice, bob = parties
    n = joint.num_qubits
    if control == target:
        raise qsim.QuantumStateError("control and target must differ")
    a1, a2, a3, a4 = n, n + 1, n + 2, n + 3
    state = joint.tensor(qsim.chi_state())
    if hooks.corruption is not None:
        state = qsim.apply_1q(state, hooks.corruption, a2 if hooks.corruption_target == 2 else a3)
    if hooks.preparer == "alice":
        transcript.append(QUBIT_TRANSFER, alice, bob, _ids(a3, a4))
    else:
        transcript.append(QUBIT_TRANSFER, bob, alice, _ids(a1, a2))
    # a rotated measurement basis {(U^dag x I)|B_xz>} = rotate the data qubit, then measure
    if hooks.alice_basis is not None:
        state = qsim.apply_1q(state, hooks.alice_basis, control)
    if hooks.bob_basis is not None:
        state = qsim.apply_1q(state, hooks.bob_basis, target)
    return state


# step-4 correction matrices, Z^bz X^ax Z^az (Alice) and Z^bz X^ax X^bx (Bob)
_ALICE_FIX = {
    (bz, ax, az): qsim.pauli_power(0, bz) @ qsim.pauli_power(ax, 0) @ qsim.pauli_power(0, az)
    for bz, ax, az in itertools.product((0, 1), repeat=3)
}
_BOB_FIX = {
    (bz, ax, bx): qsim.pauli_power(0, bz) @ qsim.pauli_power(ax, 0) @ qsim.pauli_power(bx, 0)
    for bz, ax, bx in itertools.product((0, 1), repeat=3)
}


def _finish_round(
    state, control, target, rng, branch, parties, hooks, channel, transcript, apply_corrections
) -> StateVector:
    alice, bob = parties
    n = state.num_qubits - 4
    a1, a2, a3, a4 = n, n + 1, n + 2, n + 3
    labels = list(range(n + 4))  # register position -> qubit label
    a_src, b_src = (rng, rng) if branch is None else branch

    # step 2: local Bell measurements; measured pairs leave the register
    (ax, az), state = qsim.bell_measure(state, control, a1, a_src, discard=True)
    labels.remove(control)
    labels.remove(a1)
    transcript.append(MEASUREMENT, alice, alice, bytes([ax, az]))
    (bx, bz), state = qsim.bell_measure(state, labels.index(a4), labels.index(target), b_src, discard=True)
    labels.remove(a4)
    labels.remove(target)
    transcript.append(MEASUREMENT, bob, bob, bytes([bx, bz]))

    # step 3: commit-then-open exchange of a_x and b_z
    swap = swap_protocol(
        ax ^ hooks.alice_flip,
        bz ^ hooks.bob_flip,
        rng,
        channel=channel,
        parties=(alice, bob),
        a_cls=hooks.alice_swap_cls,
        b_cls=hooks.bob_swap_cls,
    )
    _record_swap(transcript, swap.transcript.messages)
    bz_at_alice, ax_at_bob = swap.bit_at_a, swap.bit_at_b

    # step 4: Pauli corrections on the carriers, applied right-to-left as written
    if apply_corrections:
        state = qsim._apply_1q(state, _ALICE_FIX[bz_at_alice, ax, az], labels.index(a2))
        state = qsim._apply_1q(state, _BOB_FIX[bz, ax_at_bob, bx], labels.index(a3))

    # carriers take over the control/target slots
    wanted = [a2 if i == control else a3 if i == target else i for i in range(n)]
    state = qsim.permute_qubits(state, [labels.index(q) for q in wanted])
    transcript.append(REMAP, None, None, _ids(a2, control, a3, target))
    return state


def nl_cnot(
    joint: StateVector,
    control: int,
    target: int,
    rng: np.random.Generator,
    *,
    parties: tuple[int, int] = (0, 1),
    branch: tuple | None = None,
    hooks: NlCnotHooks | None = None,
    channel: Channel | None = None,
    transcript: Transcript | None = None,
    apply_corrections: bool = True,
) -> tuple[StateVector, Transcript]:
    """Run the teleportation-gadget CNOT between two parties' qubits.

    ``branch`` forces the two Bell outcomes ``(alice, bob)``; otherwise they
    are sampled from ``rng``.  ``rng`` also supplies the commitment nonces.
    Returns the joint state with ``control``/``target`` slots now holding
    the outputs, and the transcript (extended in place when given).
    """
    hooks = hooks or NlCnotHooks()
    transcript = transcript if transcript is not None else Transcript()
    prepared = _prepare_round(joint, control, target, parties, hooks, transcript)
    state = _finish_round(
        prepared, control, target, rng, branch, parties, hooks, channel, transcript, apply_corrections
    )
    return state, transcript


@dataclass(frozen=True)
class QotpKey:
    a: int  # X-key bit
    b: int  # Z-key bit

    def __post_init__(self):
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValueError("one-time-pad key bits must be 0/1")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "QotpKey":
        a, b = rng.integers(0, 2, size=2)
        return cls(int(a), int(b))


def qotp_encrypt(state: StateVector, qubit: int, key: QotpKey) -> StateVector:
    return qsim.apply_1q(state, qsim.pauli_power(key.a, key.b), qubit)


def qotp_decrypt(state: StateVector, qubit: int, key: QotpKey) -> StateVector:
    return qsim.apply_1q(state, qsim.pauli_power(key.a, key.b).conj().T, qubit)


def cnot_key_update(control_key: QotpKey, target_key: QotpKey) -> tuple[QotpKey, QotpKey]:
    """Keys after a CNOT on padded qubits: (a,b),(c,d) -> (a, b^d),(a^c, d)."""
    a, b = control_key.a, control_key.b
    c, d = target_key.a, target_key.b
    return QotpKey(a, b ^ d), QotpKey(a ^ c, d)


def ttp_nl_cnot(
    state: StateVector, control: int, target: int, control_key: QotpKey, target_key: QotpKey
) -> tuple[StateVector, tuple[QotpKey, QotpKey]]:
    """The TTP's job on padded qubits: apply CNOT, derive the updated keys."""
    return qsim.cnot(state, control, target), cnot_key_update(control_key, target_key)


def _ttp_round(state, rnd: NlCnotRound, rng, transcript: Transcript) -> StateVector:
    c, t = rnd.control_qubit, rnd.target_qubit
    pc, pt = rnd.control_party, rnd.target_party
    kc, kt = QotpKey.random(rng), QotpKey.random(rng)
    state = qotp_encrypt(state, c, kc)
    state = qotp_encrypt(state, t, kt)
    transcript.append(QUBIT_TRANSFER, pc, TTP, _ids(c))
    transcript.append(QUBIT_TRANSFER, pt, TTP, _ids(t))
    state, (kc2, kt2) = ttp_nl_cnot(state, c, t, kc, kt)
    transcript.append(QUBIT_TRANSFER, TTP, pc, _ids(c))
    transcript.append(QUBIT_TRANSFER, TTP, pt, _ids(t))
    # the update for each side depends on the other side's key, so the TTP ships it
    transcript.append(CLASSICAL, TTP, pc, bytes([kc2.a, kc2.b]))
    transcript.append(CLASSICAL, TTP, pt, bytes([kt2.a, kt2.b]))
    state = qotp_decrypt(state, c, kc2)
    return qotp_decrypt(state, t, kt2)


@dataclass
class BranchResult:
    state: StateVector
    bits: dict[int, list[tuple[int, ...]]]
    transcript: Transcript
    branch: tuple = ()
    measurement_probability: float = 1.0
    ownership: OwnershipMap | None = field(default=None, repr=False)

    def party_output(self, party: int) -> np.ndarray:
        """Reduced density matrix on the party's qubits (ascending order)."""
        return qsim.partial_trace(self.state, self.ownership.qubits_of(party))


def assemble_input(ownership: OwnershipMap, inputs) -> StateVector:
    """Joint register from per-party states (each over the party's qubits, ascending).

    ``inputs`` may already be a joint ``StateVector``; parties missing from a
    mapping start in ``|0...0>``.
    """
    if isinstance(inputs, StateVector):
        if inputs.num_qubits != ownership.num_qubits:
            raise qsim.QuantumStateError("joint input size does not match the circuit")
        return inputs
    inputs = dict(inputs or {})
    order: list[int] = []
    state = StateVector([1.0], check=False)
    for p in range(ownership.party_count):
        qs = ownership.qubits_of(p)
        s = inputs.pop(p, None)
        if s is None:
            s = qsim.basis_state(len(qs), 0)
        if s.num_qubits != len(qs):
            raise qsim.QuantumStateError(
                f"party {p} owns {len(qs)} qubits but its input has {s.num_qubits}"
            )
        state = state.tensor(s)
        order += qs
    if inputs:
        raise ValueError(f"inputs given for unknown parties {sorted(inputs)}")
    # state axis i currently holds qubit order[i]
    return qsim.permute_qubits(state, [order.index(q) for q in range(len(order))])


def _hooks_for(rnd: NlCnotRound, strategies: Mapping[int, Any]) -> NlCnotHooks:
    hooks = NlCnotHooks()
    for role, party in (("alice", rnd.control_party), ("bob", rnd.target_party)):
        strat = strategies.get(party)
        if strat is not None:
            strat.configure(hooks, role)
    return hooks


def _fuse_local(rnd: LqcRound) -> list[tuple]:
    """Steps for one local round: gate runs between measurements become one matrix.

    Every leaf of an exhaustive run replays the local rounds after its last
    branching point, so paying for a single contraction per run matters.
    """
    steps: list[tuple] = []
    run: list = []

    def flush():
        if len(run) == 1:
            steps.append(("op", rnd.party, run[0]))
        elif run:
            qubits = sorted({q for op in run for q in op.qubits})
            steps.append(("block", rnd.party, (qubits, local_unitary(run, qubits))))
        run.clear()

    for op in rnd.ops:
        if isinstance(op, LocalMeasure):
            flush()
            steps.append(("op", rnd.party, op))
        else:
            run.append(op)
    flush()
    return steps


def _is_active(strategy) -> bool:
    return strategy is not None and getattr(strategy, "active", False)


def run_smqc(
    schedule: Schedule,
    inputs,
    *,
    strategies: Mapping[int, Any] | None = None,
    mode: str = "sampled",
    seed: int = 0,
    backend: str = "peer",
    apply_corrections: bool = True,
) -> list[BranchResult]:
    """Execute a schedule among the parties.

    ``mode="sampled"`` returns one run driven by ``seed``.  ``"exhaustive"``
    walks every measurement branch (16 per NL-CNOT round, every nonzero
    outcome of each local measurement) depth first, sharing prefixes; the
    seed still drives nonces and pad keys.
    """
    if mode not in ("sampled", "exhaustive"):
        raise ValueError(f"unknown mode {mode!r}")
    if backend not in ("peer", "ttp"):
        raise ValueError(f"unknown backend {backend!r}")
    strategies = dict(strategies or {})
    if backend == "ttp" and any(_is_active(s) for s in strategies.values()):
        raise ValueError("active strategies are defined for the peer protocol only")
    ownership = schedule.ownership
    rng = np.random.default_rng(seed)
    exhaustive = mode == "exhaustive"

    steps: list[tuple] = []
    for rnd in schedule.rounds:
        if isinstance(rnd, LqcRound):
            steps += _fuse_local(rnd)
        else:
            steps.append(("nl", rnd, _hooks_for(rnd, strategies)))

    results: list[BranchResult] = []

    def explore(i, state, bits, transcript, branch, prob):
        while i < len(steps):
            kind, a, b = steps[i]
            if kind == "block":
                state = qsim.apply_unitary(state, b[1], b[0])
            elif kind == "op" and not isinstance(b, LocalMeasure):
                state, _ = apply_op(state, b)
            elif kind == "op":
                party, op = a, b
                if exhaustive:
                    probs = qsim.computational_probabilities(state, op.qubits)
                    for idx in np.flatnonzero(probs > qsim.BRANCH_EPS):
                        forced = tuple(int(x) for x in format(int(idx), f"0{len(op.qubits)}b"))
                        s2, _ = apply_op(state, op, forced)
                        t2 = transcript.copy()
                        t2.append(MEASUREMENT, party, party, bytes(forced))
                        b2 = {p: list(v) for p, v in bits.items()}
                        b2[party].append(forced)
                        explore(i + 1, s2, b2, t2, branch + (forced,), prob * float(probs[idx]))
                    return
                state, got = apply_op(state, op, rng)
                transcript.append(MEASUREMENT, party, party, bytes(got))
                bits[party].append(got)
                branch = branch + (got,)
            elif backend == "ttp":
                state = _ttp_round(state, a, rng, transcript)
            else:
                rnd, hooks = a, b
                parties = (rnd.control_party, rnd.target_party)
                prefix = transcript.copy() if exhaustive else transcript
                prepared = _prepare_round(state, rnd.control_qubit, rnd.target_qubit, parties, hooks, prefix)
                if exhaustive:
                    for oa, ob in itertools.product(qsim.ALL_BELL_OUTCOMES, repeat=2):
                        t2 = prefix.copy()
                        try:
                            s2 = _finish_round(
                                prepared, rnd.control_qubit, rnd.target_qubit, rng, (oa, ob),
                                parties, hooks, None, t2, apply_corrections,
                            )
                        except qsim.ZeroProbabilityBranch:
                            continue
                        b2 = {p: list(v) for p, v in bits.items()}
                        explore(i + 1, s2, b2, t2, branch + ((oa, ob),), prob)
                    return
                state = _finish_round(
                    prepared, rnd.control_qubit, rnd.target_qubit, rng, None,
                    parties, hooks, None, transcript, apply_corrections,
                )
                got = [e.payload for e in transcript.of_kind(MEASUREMENT)[-2:]]
                branch = branch + ((BellOutcome(*got[0]), BellOutcome(*got[1])),)
            i += 1
        results.append(BranchResult(state, bits, transcript, branch, prob, ownership))

    start = assemble_input(ownership, inputs)
    explore(0, start, {p: [] for p in range(ownership.party_count)}, Transcript(), (), 1.0)
    return results


def exchanged_bits(transcript: Transcript) -> list[tuple[int, int]]:
    """The (a_x, b_z) pairs carried by SWAP openings, one per NL-CNOT round.

    Relies on the runner's fixed polling order: within a round the control
    side's opening is delivered first.
    """
    opens = [e.payload for e in transcript.of_kind(COMMITMENT) if e.payload[0] == 0x02]
    return [(opens[i][3], opens[i + 1][3]) for i in range(0, len(opens) - 1, 2)]
