"""Adversary strategies for the NL-CNOT protocol and their effect checks.

Strategies plug into ``run_smqc`` through ``configure(hooks, role)``, where
``role`` is ``"alice"`` (control side) or ``"bob"`` (target side) of the
current round.  The ``run_*`` functions execute a single gadget under one
attack and check the predicted output on every measurement branch.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Hashable, Mapping, Sequence

import numpy as np

from . import qsim
from .circuit import Cnot, CircuitOp, OwnershipMap, SingleQubit, is_nonlocal
from .commitment import Message, MessageKind, Opening, SwapError, commit, fresh_nonce
from .protocol import COMMITMENT, NlCnotHooks, Transcript, exchanged_bits, nl_cnot
from .qsim import StateVector

PAULI_LABELS = ("I", "X", "Y", "Z")


class NotClifford(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


def is_clifford(u, atol: float = 1e-10) -> bool:
    """True iff ``u X u†`` and ``u Z u†`` are both Paulis up to phase."""
    u = np.asarray(u, dtype=complex)
    for p in (qsim.X, qsim.Z):
        m = u @ p @ u.conj().T
        if not any(abs(abs(np.trace(q.conj().T @ m)) / 2 - 1) <= atol for q in qsim.PAULIS):
            return False
    return True


def _same_up_to_phase(a: np.ndarray, b: np.ndarray, atol=1e-10) -> bool:
    return abs(abs(np.trace(a.conj().T @ b)) / a.shape[0] - 1) <= atol


def single_qubit_cliffords() -> list[np.ndarray]:
    """The 24 single-qubit Cliffords modulo phase, generated from H and S."""
    group = [qsim.I2]
    frontier = [qsim.I2]
    while frontier:
        nxt = []
        for g in frontier:
            for gen in (qsim.H, qsim.S):
                cand = gen @ g
                if not any(_same_up_to_phase(cand, h) for h in group):
                    group.append(cand)
                    nxt.append(cand)
        frontier = nxt
    return group


_CLIFFORDS = None


def random_clifford(rng: np.random.Generator) -> np.ndarray:
    global _CLIFFORDS
    if _CLIFFORDS is None:
        _CLIFFORDS = single_qubit_cliffords()
    g = _CLIFFORDS[int(rng.integers(len(_CLIFFORDS)))]
    return np.exp(1j * rng.uniform(0, 2 * np.pi)) * g


@dataclass
class Honest:
    active = False

    def configure(self, hooks: NlCnotHooks, role: str):
        pass


@dataclass
class PassiveRecorder:
    """Follows the protocol; everything it can later use is its transcript view."""

    active = False

    def configure(self, hooks: NlCnotHooks, role: str):
        pass

    @staticmethod
    def observe(transcript: Transcript, party) -> Transcript:
        return transcript.view(party)


@dataclass
class ChiCorruption:
    """Prepare the resource state and apply Clifford ``c`` to the peer's carrier.

    ``target`` is the ancilla (2: Alice's carrier, 3: Bob's); by default the
    one that ends up with the counterpart.
    """

    c: np.ndarray
    target: int | None = None
    active = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        if not qsim.is_unitary(self.c, atol=1e-10):
            raise NotClifford("corruption operator is not unitary")
        if not is_clifford(self.c):
            raise NotClifford("corruption operator is not Clifford")
        if self.target not in (None, 2, 3):
            raise ValueError("target must be ancilla 2 or 3")

    def configure(self, hooks: NlCnotHooks, role: str):
        hooks.preparer = role
        hooks.corruption = self.c
        hooks.corruption_target = self.target or (2 if role == "bob" else 3)


@dataclass
class RotatedBasis:
    """Bell-measure in the basis ``{(U† ⊗ I)|B_xz>}`` (data qubit rotated by ``U``)."""

    u: np.ndarray
    side: str | None = None
    active = True

    def configure(self, hooks: NlCnotHooks, role: str):
        if self.side in (None, role):
            setattr(hooks, f"{role}_basis", np.asarray(self.u, dtype=complex))


@dataclass
class BitFlip:
    """Send the complement of the exchanged bit (a_x for Alice, b_z for Bob)."""

    side: str | None = None
    active = True

    def configure(self, hooks: NlCnotHooks, role: str):
        if self.side in (None, role):
            setattr(hooks, f"{role}_flip", True)


@dataclass
class AttackReport:
    strategy: str
    params: dict
    branches_checked: int
    max_deviation: float
    verdict: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _branches(mode: str, shots: int):
    if mode == "exhaustive":
        return list(itertools.product(qsim.ALL_BELL_OUTCOMES, repeat=2))
    if mode == "sampled":
        return [None] * shots
    raise ValueError(f"unknown mode {mode!r}")


def _run_gadget(inputs, hooks, mode, seed, shots):
    phi, chi_in = inputs
    joint = phi.tensor(chi_in)
    rng = np.random.default_rng(seed)
    outs = []
    for br in _branches(mode, shots):
        out, tr = nl_cnot(joint, 0, 1, rng, branch=br, hooks=hooks)
        outs.append((out, tr))
    return outs


def _check_against(outs, expected: StateVector):
    devs = [1 - qsim.overlap(o, expected) for o, _ in outs]
    return max(devs), all(d <= qsim.PROTOCOL_ATOL for d in devs)


def _describe(u) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(u).reshape(-1)]


def run_rotated_basis_attack(
    u, inputs: tuple[StateVector, StateVector], mode: str = "exhaustive", *,
    side: str = "alice", seed: int = 0, shots: int = 64,
) -> tuple[list[StateVector], AttackReport]:
    """Expected output: ``CNOT((Uφ)⊗ϕ)`` for Alice, ``CNOT(φ⊗(Uϕ))`` for Bob."""
    u = np.asarray(u, dtype=complex)
    hooks = NlCnotHooks(**{f"{side}_basis": u})
    outs = _run_gadget(inputs, hooks, mode, seed, shots)
    phi, chi_in = inputs
    if side == "alice":
        phi = qsim.apply_1q(phi, u, 0)
    else:
        chi_in = qsim.apply_1q(chi_in, u, 0)
    expected = qsim.cnot(phi.tensor(chi_in), 0, 1)
    dev, ok = _check_against(outs, expected)
    report = AttackReport("rotated-basis", {"side": side, "u": _describe(u)}, len(outs), dev, ok)
    return [o for o, _ in outs], report


def run_bit_flip_attack(
    inputs: tuple[StateVector, StateVector], mode: str = "exhaustive", *,
    side: str = "alice", seed: int = 0, shots: int = 64,
) -> tuple[list[StateVector], AttackReport]:
    """Expected output: ``CNOT(φ⊗Xϕ)`` when Alice flips, ``CNOT(Zφ⊗ϕ)`` when Bob does."""
    hooks = NlCnotHooks(**{f"{side}_flip": True})
    outs = _run_gadget(inputs, hooks, mode, seed, shots)
    phi, chi_in = inputs
    if side == "alice":
        chi_in = qsim.apply_1q(chi_in, qsim.X, 0)
    else:
        phi = qsim.apply_1q(phi, qsim.Z, 0)
    expected = qsim.cnot(phi.tensor(chi_in), 0, 1)
    dev, ok = _check_against(outs, expected)
    return [o for o, _ in outs], AttackReport("bitflip", {"side": side}, len(outs), dev, ok)


def _victim_distribution(inputs, c, target) -> np.ndarray:
    """Exact Bell-outcome distribution of the victim's own measurement."""
    state = inputs[0].tensor(inputs[1]).tensor(qsim.chi_state())
    if c is not None:
        state = qsim.apply_1q(state, c, 1 + target)
    # data qubits 0, 1; ancillas 2..5
    return qsim.bell_probabilities(state, 0, 2) if target == 2 else qsim.bell_probabilities(state, 5, 1)


def run_chi_corruption(
    c, target: int, inputs: tuple[StateVector, StateVector], mode: str = "exhaustive", *,
    seed: int = 0, shots: int = 64,
) -> tuple[list[StateVector], AttackReport]:
    """Dishonest preparer applies Clifford ``c`` to ancilla ``target`` (2 or 3).

    Checks, per branch, that the output is ``(c·P)`` on the corrupted side
    times the honest ``CNOT(φ⊗ϕ)`` for some Pauli ``P``, and that neither a
    SWAP failure nor a shift in the victim's outcome statistics gives the
    corruption away.
    """
    strat = ChiCorruption(c, target)
    hooks = NlCnotHooks()
    strat.configure(hooks, "bob" if target == 2 else "alice")
    detected = None
    try:
        outs = _run_gadget(inputs, hooks, mode, seed, shots)
    except SwapError as exc:  # pragma: no cover - the attack never touches the SWAP
        detected = repr(exc)
        outs = []
    honest = qsim.cnot(inputs[0].tensor(inputs[1]), 0, 1)
    side = 0 if target == 2 else 1
    found = []
    worst = 0.0
    for out, _ in outs:
        best_label, best_dev = None, 1.0
        for label, p in zip(PAULI_LABELS, qsim.PAULIS):
            cand = qsim.apply_1q(honest, strat.c @ p, side)
            dev = 1 - qsim.overlap(out, cand)
            if dev < best_dev:
                best_label, best_dev = label, dev
        found.append(best_label if best_dev <= qsim.PROTOCOL_ATOL else None)
        worst = max(worst, best_dev)
    stats_shift = float(
        np.abs(_victim_distribution(inputs, strat.c, target) - _victim_distribution(inputs, None, target)).max()
    )
    ok = (
        detected is None
        and bool(outs)
        and all(f is not None for f in found)
        and stats_shift <= qsim.PROTOCOL_ATOL
    )
    report = AttackReport(
        "chi-corruption",
        {"target": f"ancilla{target}", "c": _describe(strat.c)},
        len(outs),
        worst,
        ok,
        {"paulis": found, "victim_stats_shift": stats_shift, "detection": detected},
    )
    return [o for o, _ in outs], report


PLUS_MINUS = {"+": qsim.ket("+"), "-": qsim.ket("-")}


def _cnot_pair(phi: StateVector, target: StateVector) -> StateVector:
    return qsim.cnot(phi.tensor(target), 0, 1)


def prop1_check(
    phi: StateVector, phi_prime: StateVector, sign: str = "+", *, target: StateVector | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Target-side reduced states of ``CNOT(φ⊗ϕ)`` and ``CNOT(φ'⊗ϕ)`` and their trace distance.

    ``ϕ`` is ``|+>`` or ``|->`` by ``sign``; ``target`` overrides it (for
    negative controls).
    """
    tgt = target if target is not None else PLUS_MINUS[sign]
    rho = qsim.partial_trace(_cnot_pair(phi, tgt), [1])
    rho_p = qsim.partial_trace(_cnot_pair(phi_prime, tgt), [1])
    return rho, rho_p, qsim.trace_distance(rho, rho_p)


def _complement(v: np.ndarray) -> np.ndarray:
    return np.array([-np.conj(v[1]), np.conj(v[0])])


def recover_u1(
    phi: StateVector, phi_prime: StateVector, sign: str = "+", *, target: StateVector | None = None
) -> np.ndarray:
    """Local unitary on Alice's side taking ``CNOT(φ⊗ϕ)`` to ``CNOT(φ'⊗ϕ)``.

    Uses the Schmidt form of the first state; the second state is expanded
    against the same target-side basis, which makes the left vectors
    coefficient-matched.  ``U1 = Σ_k |α'_k><α_k|``.
    """
    tgt = target if target is not None else PLUS_MINUS[sign]
    psi = _cnot_pair(phi, tgt)
    psi_p = _cnot_pair(phi_prime, tgt)
    sd = qsim.schmidt_decompose(psi, 0)
    m_p = psi_p.amplitudes.reshape(2, 2)
    a = sd.coefficients
    left = sd.left_basis
    v0 = m_p @ sd.right_basis[0].conj()
    alpha0 = v0 / np.linalg.norm(v0)
    alpha1 = _complement(alpha0)
    if a[1] > 1e-8:
        v1 = m_p @ sd.right_basis[1].conj()
        ph = np.vdot(alpha1, v1)
        if abs(ph) > 1e-12:
            alpha1 = alpha1 * ph / abs(ph)
    left1 = _complement(left[0]) if a[1] <= 1e-8 else left[1]
    return np.outer(alpha0, left[0].conj()) + np.outer(alpha1, left1.conj())


def verify_u1(phi, phi_prime, u1, sign="+", *, target=None) -> float:
    tgt = target if target is not None else PLUS_MINUS[sign]
    moved = qsim.apply_1q(_cnot_pair(phi, tgt), u1, 0)
    return qsim.overlap(moved, _cnot_pair(phi_prime, tgt))


@dataclass
class PassiveReport:
    distributions: dict
    comparisons: list
    threshold: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "distributions": {str(k): v for k, v in self.distributions.items()},
            "comparisons": self.comparisons,
            "threshold": self.threshold,
            "flagged": self.flagged,
        }


def _tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def forged_transcript(pairs: Sequence[tuple[int, int]], rng: np.random.Generator) -> Transcript:
    """A transcript whose SWAP rounds carry the given ``(a_x, b_z)`` pairs.

    Useful as a counterexample source for ``analyze_passive``: the bits are
    whatever the caller chooses, not what a gadget would produce.
    """
    tr = Transcript()
    for pair in pairs:
        openings = [Opening(int(bit), fresh_nonce(rng)) for bit in pair]
        wires = ((0, 1), (1, 0))
        for (sender, receiver), op in zip(wires, openings):
            digest = commit(op.bit, op.nonce).digest
            tr.append(COMMITMENT, sender, receiver, Message(MessageKind.COMMIT, sender, receiver, digest).encode())
        for (sender, receiver), op in zip(wires, openings):
            tr.append(COMMITMENT, sender, receiver, Message(MessageKind.OPEN, sender, receiver, op.to_bytes()).encode())
    return tr


def analyze_passive(
    transcripts: Sequence[Transcript],
    labels: Sequence[Hashable],
    *,
    threshold: float = 0.02,
    min_samples: int = 1000,
) -> PassiveReport:
    """Compare the exchanged-bit distribution across input classes.

    Each transcript contributes its ``(a_x, b_z)`` pairs; classes are
    compared pairwise by total-variation distance and the report is
    flagged if any distance exceeds ``threshold``.
    """
    if len(transcripts) != len(labels):
        raise ValueError("one label per transcript")
    counts: dict[Hashable, Counter] = {}
    runs = Counter(labels)
    for tr, lab in zip(transcripts, labels):
        counts.setdefault(lab, Counter()).update(exchanged_bits(tr))
    short = [lab for lab, n in runs.items() if n < min_samples]
    if short:
        raise InsufficientSamples(f"classes {short} have fewer than {min_samples} transcripts")
    dists = {}
    for lab, c in counts.items():
        total = sum(c.values())
        dists[lab] = {f"{ax}{bz}": c[(ax, bz)] / total for ax in (0, 1) for bz in (0, 1)}
    comparisons = []
    for l1, l2 in itertools.combinations(sorted(dists, key=str), 2):
        comparisons.append({"a": str(l1), "b": str(l2), "tv": _tv(dists[l1], dists[l2])})
    flagged = any(c["tv"] > threshold for c in comparisons)
    return PassiveReport(dists, comparisons, threshold, flagged)


def predicted_circuit(
    ops: Sequence[CircuitOp], ownership: OwnershipMap, strategies: Mapping[int, Any]
) -> list[CircuitOp] | None:
    """Monolithic circuit reproducing the attacks' closed-form effect on each NL-CNOT.

    ``None`` when some strategy has no closed form (resource corruption is
    branch dependent).
    """
    out: list[CircuitOp] = []
    for op in ops:
        if not is_nonlocal(op, ownership):
            out.append(op)
            continue
        rotations, flips = [], []
        for role, q, party in (
            ("alice", op.control, ownership.owner(op.control)),
            ("bob", op.target, ownership.owner(op.target)),
        ):
            strat = strategies.get(party)
            if isinstance(strat, ChiCorruption):
                return None
            if isinstance(strat, RotatedBasis) and strat.side in (None, role):
                rotations.append(SingleQubit(np.asarray(strat.u, dtype=complex), q))
            if isinstance(strat, BitFlip) and strat.side in (None, role):
                # Alice's flip lands as X on the target input, Bob's as Z on the control input
                if role == "alice":
                    flips.append(SingleQubit(qsim.X, op.target, "x"))
                else:
                    flips.append(SingleQubit(qsim.Z, op.control, "z"))
        out += rotations + flips
        out.append(Cnot(op.control, op.target))
    return out
