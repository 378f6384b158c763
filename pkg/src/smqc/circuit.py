"""Circuit representation, file parsing, model validation and scheduling.

A circuit is a list of ops over ``m`` qubits, each qubit owned by one of
``n`` parties.  CNOTs whose ends have different owners are the only
operations that need interaction; everything else is folded into
per-party local rounds.

File format (one statement per line, ``#`` starts a comment)::

    parties 2
    qubits 2
    owner 0 0
    owner 1 1
    h 0
    u 1 1 0 0 0 0 0 1 0      # re00 im00 re01 im01 re10 im10 re11 im11
    cnot 0 1
    measure 1
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence, Union

import numpy as np
from scipy.linalg import polar

from . import qsim
from .qsim import StateVector

# entries written with ~8 decimals are snapped to the nearest unitary
UNITARY_SNAP_ATOL = 1e-6


class CircuitSyntaxError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class SingleQubit:
    u: np.ndarray = field(compare=False)
    q: int
    name: str = "u"
    line: int | None = field(default=None, compare=False)

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.q,)


@dataclass(frozen=True)
class Cnot:
    control: int
    target: int
    line: int | None = field(default=None, compare=False)

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)


@dataclass(frozen=True)
class LocalMeasure:
    qubits: tuple[int, ...]
    line: int | None = field(default=None, compare=False)


CircuitOp = Union[SingleQubit, Cnot, LocalMeasure]


@dataclass(frozen=True)
class OwnershipMap:
    party_count: int
    owners: tuple[int, ...]

    def __post_init__(self):
        for q, p in enumerate(self.owners):
            if not 0 <= p < self.party_count:
                raise ValueError(f"qubit {q} owned by unknown party {p}")

    @property
    def num_qubits(self) -> int:
        return len(self.owners)

    def owner(self, q: int) -> int:
        return self.owners[q]

    def qubits_of(self, party: int) -> list[int]:
        return [q for q, p in enumerate(self.owners) if p == party]

    @property
    def input_sizes(self) -> list[int]:
        return [len(self.qubits_of(p)) for p in range(self.party_count)]


def _parse_int(tok: str, line: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CircuitSyntaxError(line, f"expected integer {what}, got {tok!r}") from None


def _snap_unitary(u: np.ndarray) -> np.ndarray:
    if qsim.is_unitary(u, atol=UNITARY_SNAP_ATOL):
        return polar(u)[0]
    return u


def parse_circuit(text: str) -> tuple[list[CircuitOp], OwnershipMap]:
    parties = None
    m = None
    owners: dict[int, int] = {}
    ops: list[CircuitOp] = []

    def qubit(tok: str, ln: int) -> int:
        if m is None:
            raise CircuitSyntaxError(ln, "gate before 'qubits' declaration")
        q = _parse_int(tok, ln, "qubit")
        if not 0 <= q < m:
            raise CircuitSyntaxError(ln, f"qubit {q} out of range (0..{m - 1})")
        return q

    for ln, raw in enumerate(text.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        kw, args = toks[0].lower(), toks[1:]
        if kw == "parties":
            if len(args) != 1:
                raise CircuitSyntaxError(ln, "usage: parties <n>")
            parties = _parse_int(args[0], ln, "party count")
            if parties < 1:
                raise CircuitSyntaxError(ln, "need at least one party")
        elif kw == "qubits":
            if len(args) != 1:
                raise CircuitSyntaxError(ln, "usage: qubits <m>")
            m = _parse_int(args[0], ln, "qubit count")
            if m < 0:
                raise CircuitSyntaxError(ln, "qubit count must be non-negative")
        elif kw == "owner":
            if len(args) != 2:
                raise CircuitSyntaxError(ln, "usage: owner <qubit> <party>")
            q = qubit(args[0], ln)
            if parties is None:
                raise CircuitSyntaxError(ln, "owner before 'parties' declaration")
            p = _parse_int(args[1], ln, "party")
            if not 0 <= p < parties:
                raise CircuitSyntaxError(ln, f"party {p} out of range (0..{parties - 1})")
            if q in owners:
                raise CircuitSyntaxError(ln, f"qubit {q} already has an owner")
            owners[q] = p
        elif kw in ("x", "y", "z", "h", "s", "t", "sdg", "tdg"):
            if len(args) != 1:
                raise CircuitSyntaxError(ln, f"usage: {kw} <qubit>")
            ops.append(SingleQubit(qsim.GATES[kw], qubit(args[0], ln), kw, ln))
        elif kw == "u":
            if len(args) != 9:
                raise CircuitSyntaxError(ln, "usage: u <q> followed by 8 real numbers")
            q = qubit(args[0], ln)
            try:
                vals = [float(v) for v in args[1:]]
            except ValueError:
                raise CircuitSyntaxError(ln, "matrix entries must be decimal numbers") from None
            u = np.array([complex(vals[i], vals[i + 1]) for i in range(0, 8, 2)]).reshape(2, 2)
            ops.append(SingleQubit(_snap_unitary(u), q, "u", ln))
        elif kw == "cnot":
            if len(args) != 2:
                raise CircuitSyntaxError(ln, "usage: cnot <control> <target>")
            c, t = qubit(args[0], ln), qubit(args[1], ln)
            if c == t:
                raise CircuitSyntaxError(ln, "cnot control and target must differ")
            ops.append(Cnot(c, t, ln))
        elif kw == "measure":
            if not args:
                raise CircuitSyntaxError(ln, "usage: measure <q> [<q> ...]")
            qs = tuple(qubit(a, ln) for a in args)
            if len(set(qs)) != len(qs):
                raise CircuitSyntaxError(ln, "duplicate qubit in measure")
            ops.append(LocalMeasure(qs, ln))
        else:
            raise CircuitSyntaxError(ln, f"unknown gate or statement {kw!r}")

    if parties is None or m is None:
        raise CircuitSyntaxError(0, "missing 'parties' or 'qubits' declaration")
    missing = [q for q in range(m) if q not in owners]
    if missing:
        raise CircuitSyntaxError(0, f"qubit {missing[0]} has no owner")
    return ops, OwnershipMap(parties, tuple(owners[q] for q in range(m)))


def format_circuit(ops: Sequence[CircuitOp], ownership: OwnershipMap) -> str:
    lines = [f"parties {ownership.party_count}", f"qubits {ownership.num_qubits}"]
    lines += [f"owner {q} {p}" for q, p in enumerate(ownership.owners)]
    for op in ops:
        if isinstance(op, Cnot):
            lines.append(f"cnot {op.control} {op.target}")
        elif isinstance(op, LocalMeasure):
            lines.append("measure " + " ".join(map(str, op.qubits)))
        elif op.name in qsim.GATES:
            lines.append(f"{op.name} {op.q}")
        else:
            flat = " ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in op.u.reshape(-1))
            lines.append(f"u {op.q} {flat}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Rejection:
    op_index: int
    line: int | None
    reason: str

    def __str__(self):
        where = f"line {self.line}" if self.line is not None else f"op {self.op_index}"
        return f"{where}: {self.reason}"


def validate(ops: Sequence[CircuitOp], ownership: OwnershipMap) -> list[Rejection]:
    """Check the circuit against the computation model; empty list means ok.

    Only local measurements are allowed: every measured qubit set must
    belong to a single party.
    """
    out = []
    m = ownership.num_qubits
    for i, op in enumerate(ops):
        qubits = op.qubits
        if any(not 0 <= q < m for q in qubits):
            out.append(Rejection(i, op.line, f"qubit index out of range in {qubits}"))
            continue
        if isinstance(op, LocalMeasure):
            if not qubits:
                out.append(Rejection(i, op.line, "empty measurement"))
                continue
            owners = sorted({ownership.owner(q) for q in qubits})
            if len(owners) > 1:
                out.append(
                    Rejection(
                        i,
                        op.line,
                        f"nonlocal measurement rejected: qubits {list(qubits)} span parties {owners}",
                    )
                )
        elif isinstance(op, SingleQubit):
            if not qsim.is_unitary(op.u):
                out.append(Rejection(i, op.line, f"non-unitary matrix on qubit {op.q}"))
        elif isinstance(op, Cnot) and op.control == op.target:
            out.append(Rejection(i, op.line, "cnot control equals target"))
    return out


class CnotKind(Enum):
    LOCAL = "local"
    NONLOCAL = "nonlocal"


def classify_cnot(op: Cnot, ownership: OwnershipMap) -> CnotKind:
    if ownership.owner(op.control) == ownership.owner(op.target):
        return CnotKind.LOCAL
    return CnotKind.NONLOCAL


def is_nonlocal(op: CircuitOp, ownership: OwnershipMap) -> bool:
    return isinstance(op, Cnot) and classify_cnot(op, ownership) is CnotKind.NONLOCAL


@dataclass(frozen=True)
class LqcRound:
    party: int
    ops: tuple[CircuitOp, ...]


@dataclass(frozen=True)
class NlCnotRound:
    control_party: int
    control_qubit: int
    target_party: int
    target_qubit: int

    @property
    def op(self) -> Cnot:
        return Cnot(self.control_qubit, self.target_qubit)


Round = Union[LqcRound, NlCnotRound]


@dataclass(frozen=True)
class Schedule:
    rounds: tuple[Round, ...]
    ownership: OwnershipMap

    @property
    def nl_cnot_count(self) -> int:
        return sum(isinstance(r, NlCnotRound) for r in self.rounds)

    def flatten(self) -> Iterator[CircuitOp]:
        for r in self.rounds:
            if isinstance(r, NlCnotRound):
                yield r.op
            else:
                yield from r.ops

    def describe(self) -> str:
        lines = []
        for i, r in enumerate(self.rounds):
            if isinstance(r, NlCnotRound):
                lines.append(
                    f"round {i}: NL-CNOT  P{r.control_party}[q{r.control_qubit}] -> "
                    f"P{r.target_party}[q{r.target_qubit}]"
                )
            else:
                names = ", ".join(_op_label(op) for op in r.ops)
                lines.append(f"round {i}: LQC      P{r.party}: {names}")
        lines.append(f"{self.nl_cnot_count} NL-CNOT rounds")
        return "\n".join(lines)


def _op_label(op: CircuitOp) -> str:
    if isinstance(op, Cnot):
        return f"cnot(q{op.control},q{op.target})"
    if isinstance(op, LocalMeasure):
        return "measure(" + ",".join(f"q{q}" for q in op.qubits) + ")"
    return f"{op.name}(q{op.q})"


class InvalidCircuit(ValueError):
    def __init__(self, rejections: list[Rejection]):
        super().__init__("; ".join(map(str, rejections)))
        self.rejections = rejections


def build_schedule(ops: Sequence[CircuitOp], ownership: OwnershipMap) -> Schedule:
    """Split the circuit into local rounds separated by NL-CNOT barriers.

    Between two barriers each party gets at most one round holding its ops
    in source order; rounds are emitted in party-id order.  Refuses circuits
    that fail ``validate``.
    """
    rejections = validate(ops, ownership)
    if rejections:
        raise InvalidCircuit(rejections)
    rounds: list[Round] = []
    pending: dict[int, list[CircuitOp]] = {}

    def flush():
        for p in sorted(pending):
            rounds.append(LqcRound(p, tuple(pending[p])))
        pending.clear()

    for op in ops:
        if is_nonlocal(op, ownership):
            flush()
            rounds.append(
                NlCnotRound(
                    ownership.owner(op.control), op.control, ownership.owner(op.target), op.target
                )
            )
        else:
            pending.setdefault(ownership.owner(op.qubits[0]), []).append(op)
    flush()
    return Schedule(tuple(rounds), ownership)


def apply_op(state: StateVector, op: CircuitOp, source=None) -> tuple[StateVector, tuple[int, ...] | None]:
    """Apply one op; returns the new state and measured bits (``None`` for gates)."""
    if isinstance(op, SingleQubit):
        return qsim.apply_1q(state, op.u, op.q), None
    if isinstance(op, Cnot):
        return qsim.cnot(state, op.control, op.target), None
    if source is None:
        raise ValueError("measurement needs a randomness source or forced bits")
    bits, state = qsim.measure_computational(state, op.qubits, source)
    return state, bits


def local_unitary(ops: Sequence[CircuitOp], qubits: Sequence[int]) -> np.ndarray:
    """Matrix of a measurement-free op sequence restricted to ``qubits``."""
    qubits = list(qubits)
    pos = {q: i for i, q in enumerate(qubits)}
    k = len(qubits)
    cols = []
    for idx in range(2**k):
        state = qsim.basis_state(k, idx)
        for op in ops:
            if isinstance(op, SingleQubit):
                state = qsim.apply_1q(state, op.u, pos[op.q])
            elif isinstance(op, Cnot):
                state = qsim.cnot(state, pos[op.control], pos[op.target])
            else:
                raise ValueError("local_unitary needs a measurement-free sequence")
        cols.append(state.amplitudes)
    return np.array(cols).T


def oracle_simulate(
    ops: Sequence[CircuitOp], input_state: StateVector, randomness=None
) -> tuple[StateVector, list[tuple[int, ...]]]:
    """Monolithic reference evaluation of the whole circuit on one register.

    ``randomness`` is a ``numpy.random.Generator`` or a sequence of forced
    outcome tuples, one per measurement in circuit order.
    """
    needed = max((q for op in ops for q in op.qubits), default=-1) + 1
    if input_state.num_qubits < needed:
        raise qsim.QuantumStateError(
            f"input has {input_state.num_qubits} qubits, circuit needs {needed}"
        )
    forced = None if randomness is None or isinstance(randomness, np.random.Generator) else list(randomness)
    state = input_state
    measured = []
    for op in ops:
        src = randomness
        if isinstance(op, LocalMeasure) and forced is not None:
            if not forced:
                raise ValueError("ran out of forced measurement outcomes")
            src = forced.pop(0)
        state, bits = apply_op(state, op, src)
        if bits is not None:
            measured.append(bits)
    return state, measured


def random_circuit(
    rng: np.random.Generator,
    *,
    parties: int = 3,
    max_qubits: int = 8,
    max_gates: int = 50,
    nonlocal_cnots: int | None = None,
    max_nonlocal: int = 3,
    measurements: bool = False,
) -> tuple[list[CircuitOp], OwnershipMap]:
    """Random circuit over {named gates, Haar 1q unitaries, CNOT} with a bounded NL-CNOT count."""
    m = int(rng.integers(parties, max_qubits + 1))
    owners = list(range(parties)) + [int(p) for p in rng.integers(0, parties, size=m - parties)]
    rng.shuffle(owners)
    ownership = OwnershipMap(parties, tuple(owners))
    n_gates = int(rng.integers(1, max_gates + 1))
    if nonlocal_cnots is None:
        nonlocal_cnots = int(rng.integers(0, max_nonlocal + 1))
    nonlocal_cnots = min(nonlocal_cnots, n_gates)
    nl_slots = set(rng.choice(n_gates, size=nonlocal_cnots, replace=False).tolist())
    names = ["x", "y", "z", "h", "s", "t"]
    ops: list[CircuitOp] = []
    for i in range(n_gates):
        if i in nl_slots:
            c = int(rng.integers(m))
            t = int(rng.choice([q for q in range(m) if owners[q] != owners[c]]))
            ops.append(Cnot(c, t))
            continue
        q = int(rng.integers(m))
        mates = [p for p in range(m) if p != q and owners[p] == owners[q]]
        r = rng.random()
        if r < 0.2 and mates:
            ops.append(Cnot(q, int(rng.choice(mates))))
        elif measurements and r < 0.3:
            ops.append(LocalMeasure((q,)))
        elif r < 0.6:
            name = names[int(rng.integers(len(names)))]
            ops.append(SingleQubit(qsim.GATES[name], q, name))
        else:
            ops.append(SingleQubit(qsim.random_unitary(rng, 2), q))
    return ops, ownership
