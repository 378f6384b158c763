"""Deterministic state-vector simulation core.

Conventions:
- qubit 0 is the leftmost ket symbol and the most significant bit of the
  amplitude index, so ``|q0 q1 ... q(n-1)>`` maps to index ``q0*2^(n-1) + ...``.
- Bell labels follow ``|B_xz> = (|0x> + (-1)^z |1 x̄>)/sqrt(2)``.  With these
  labels, Bell-measuring ``(psi, first half of B_00)`` with outcome ``(x, z)``
  leaves ``X^x Z^z |psi>`` on the remaining half.

Randomness is threaded explicitly: measurement functions accept either a
``numpy.random.Generator`` (Born-rule sampling) or a forced outcome.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

ALGEBRA_ATOL = 1e-12
PROTOCOL_ATOL = 1e-10
BRANCH_EPS = 1e-12

_S2 = 1 / np.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _S2
S = np.array([[1, 0], [0, 1j]], dtype=complex)
SDG = S.conj().T
T = np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex)
TDG = T.conj().T
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

GATES = {"i": I2, "x": X, "y": Y, "z": Z, "h": H, "s": S, "sdg": SDG, "t": T, "tdg": TDG}
PAULIS = (I2, X, Y, Z)


class QuantumStateError(ValueError):
    """Invalid state, operator or qubit index."""


class ZeroProbabilityBranch(QuantumStateError):
    """A forced measurement outcome has (numerically) zero probability."""


@dataclass(frozen=True)
class BellOutcome:
    x: int
    z: int

    def __post_init__(self):
        if self.x not in (0, 1) or self.z not in (0, 1):
            raise ValueError(f"Bell outcome bits must be 0/1, got ({self.x}, {self.z})")

    @property
    def index(self) -> int:
        return 2 * self.x + self.z

    def __iter__(self):
        return iter((self.x, self.z))


ALL_BELL_OUTCOMES = tuple(BellOutcome(x, z) for x in (0, 1) for z in (0, 1))


class StateVector:
    """Pure state of ``num_qubits`` qubits.

    Instances are treated as values: every operation in this module returns a
    fresh ``StateVector`` and the amplitude buffer is marked read-only.
    """

    __slots__ = ("amplitudes", "num_qubits")

    def __init__(self, amplitudes, *, check: bool = True):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if n < 0 or 2**n != amps.size:
            raise QuantumStateError(f"amplitude count {amps.size} is not a power of two")
        if check and abs(np.vdot(amps, amps).real - 1) > PROTOCOL_ATOL:
            raise QuantumStateError(f"state is not normalized (norm^2={np.vdot(amps, amps).real!r})")
        amps.setflags(write=False)
        self.amplitudes = amps
        self.num_qubits = n

    @classmethod
    def _wrap(cls, amps: np.ndarray, num_qubits: int) -> "StateVector":
        """Trusted internal constructor: no copy, no checks."""
        obj = cls.__new__(cls)
        amps = amps.reshape(-1)
        amps.setflags(write=False)
        obj.amplitudes = amps
        obj.num_qubits = num_qubits
        return obj

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(amps)
        if nrm == 0:
            raise QuantumStateError("cannot normalize the zero vector")
        return cls(amps / nrm)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector._wrap(np.kron(self.amplitudes, other.amplitudes), self.num_qubits + other.num_qubits)

    def _tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def __len__(self):
        return self.amplitudes.size

    def __repr__(self):
        terms = []
        for idx in np.flatnonzero(np.abs(self.amplitudes) > 1e-9)[:8]:
            terms.append(f"{self.amplitudes[idx]:.4g}|{idx:0{self.num_qubits}b}>")
        more = " + ..." if np.count_nonzero(np.abs(self.amplitudes) > 1e-9) > 8 else ""
        return f"StateVector({' + '.join(terms)}{more})"


def _check_index(state: StateVector, q: int):
    if not 0 <= q < state.num_qubits:
        raise QuantumStateError(f"qubit index {q} out of range for {state.num_qubits} qubits")


def is_unitary(u: np.ndarray, atol: float = ALGEBRA_ATOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() <= atol)


def _require_unitary(u, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise QuantumStateError(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    # 1e-10: composed matrices (e.g. Z^a X^b U) drift past the algebraic bound
    if not is_unitary(u, atol=PROTOCOL_ATOL):
        raise QuantumStateError("matrix is not unitary")
    return u


def basis_state(num_qubits: int, index: int = 0) -> StateVector:
    if num_qubits < 0:
        raise QuantumStateError("num_qubits must be non-negative")
    if not 0 <= index < 2**num_qubits:
        raise QuantumStateError(f"basis index {index} out of range for {num_qubits} qubits")
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[index] = 1
    return StateVector(amps, check=False)


def product_state(*states: StateVector) -> StateVector:
    out = StateVector([1.0], check=False)
    for s in states:
        out = out.tensor(s)
    return out


KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) * _S2,
    "-": np.array([1, -1], dtype=complex) * _S2,
}


def ket(label: str) -> StateVector:
    """Single-qubit named state: ``ket('+')`` or ``ket('|+>')``."""
    key = label.strip().removeprefix("|").removesuffix(">").removesuffix("⟩")
    if key not in KETS:
        raise QuantumStateError(f"unknown ket {label!r}")
    return StateVector(KETS[key], check=False)


def _apply_1q(state: StateVector, u: np.ndarray, qubit: int) -> StateVector:
    n = state.num_qubits
    psi = state.amplitudes.reshape(2**qubit, 2, 2 ** (n - qubit - 1))
    lo, hi = psi[:, 0, :], psi[:, 1, :]
    out = np.empty_like(psi)
    out[:, 0, :] = u[0, 0] * lo + u[0, 1] * hi
    out[:, 1, :] = u[1, 0] * lo + u[1, 1] * hi
    return StateVector._wrap(out, n)


def apply_1q(state: StateVector, u, qubit: int) -> StateVector:
    _check_index(state, qubit)
    return _apply_1q(state, _require_unitary(u, 2), qubit)


def _apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    n = state.num_qubits
    psi = state._tensor_view()
    out = psi.copy()
    sel = [slice(None)] * n
    sel[control] = 1
    ctl = tuple(sel)
    # within the control=1 block, flip the target axis
    axis = target - (target > control)
    out[ctl] = np.flip(psi[ctl], axis=axis)
    return StateVector._wrap(out, n)


def apply_2q(state: StateVector, u, q1: int, q2: int) -> StateVector:
    """Apply a 4x4 unitary with ``q1`` as the first (more significant) factor."""
    _check_index(state, q1)
    _check_index(state, q2)
    if q1 == q2:
        raise QuantumStateError("two-qubit gate needs distinct qubits")
    u = _require_unitary(u, 4)
    if u is CNOT:
        return _apply_cnot(state, q1, q2)
    psi = np.tensordot(u.reshape(2, 2, 2, 2), state._tensor_view(), axes=([2, 3], [q1, q2]))
    psi = np.moveaxis(psi, [0, 1], [q1, q2])
    return StateVector._wrap(np.ascontiguousarray(psi), state.num_qubits)


def apply_unitary(state: StateVector, u, qubits: Sequence[int]) -> StateVector:
    """Apply a ``2^k x 2^k`` unitary to ``qubits`` (first listed = most significant)."""
    qubits = list(qubits)
    k = len(qubits)
    for q in qubits:
        _check_index(state, q)
    if len(set(qubits)) != k:
        raise QuantumStateError("duplicate qubits in gate")
    u = _require_unitary(u, 2**k)
    psi = np.tensordot(u.reshape((2,) * (2 * k)), state._tensor_view(), axes=(list(range(k, 2 * k)), qubits))
    psi = np.moveaxis(psi, list(range(k)), qubits)
    return StateVector._wrap(np.ascontiguousarray(psi), state.num_qubits)


def cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_index(state, control)
    _check_index(state, target)
    if control == target:
        raise QuantumStateError("two-qubit gate needs distinct qubits")
    return _apply_cnot(state, control, target)


def bell_state(x: int, z: int) -> StateVector:
    amps = np.zeros(4, dtype=complex)
    amps[x] = _S2  # |0x>
    amps[2 + (1 - x)] = (-1) ** z * _S2  # |1 x̄>
    return StateVector(amps, check=False)


_BELL_BASIS = np.array([bell_state(o.x, o.z).amplitudes for o in ALL_BELL_OUTCOMES])


def chi_state() -> StateVector:
    """Four-qubit resource: two ``B_00`` pairs on (0,1),(2,3), then CNOT 1 -> 2."""
    return _CHI


_CHI = cnot(bell_state(0, 0).tensor(bell_state(0, 0)), 1, 2)


def _pair_amplitudes(state: StateVector, q1: int, q2: int) -> np.ndarray:
    """Rows indexed by the (q1, q2) basis value, columns by the remaining qubits."""
    psi = np.moveaxis(state._tensor_view(), [q1, q2], [0, 1])
    return psi.reshape(4, -1)


def _restore_pair(rows: np.ndarray, n: int, q1: int, q2: int) -> StateVector:
    psi = rows.reshape((2, 2) + (2,) * (n - 2))
    return StateVector(np.moveaxis(psi, [0, 1], [q1, q2]), check=False)


def bell_probabilities(state: StateVector, q1: int, q2: int) -> np.ndarray:
    """Born probabilities of the four Bell outcomes, ordered as ``ALL_BELL_OUTCOMES``."""
    _check_index(state, q1)
    _check_index(state, q2)
    if q1 == q2:
        raise QuantumStateError("Bell measurement needs distinct qubits")
    proj = _BELL_BASIS.conj() @ _pair_amplitudes(state, q1, q2)
    return np.sum(np.abs(proj) ** 2, axis=1)


RandomSource = Union[np.random.Generator, BellOutcome, tuple]


def bell_measure(
    state: StateVector, q1: int, q2: int, source: RandomSource, *, discard: bool = False
) -> tuple[BellOutcome, StateVector]:
    """Projective measurement of ``(q1, q2)`` in the Bell basis.

    ``source`` is a seeded generator (Born sampling) or a forced outcome;
    forcing an outcome of probability <= 1e-12 raises ``ZeroProbabilityBranch``.
    The returned state keeps all qubits with the measured pair collapsed, or
    with ``discard=True`` only the remaining qubits in their original order.
    """
    _check_index(state, q1)
    _check_index(state, q2)
    if q1 == q2:
        raise QuantumStateError("Bell measurement needs distinct qubits")
    rest = _BELL_BASIS.conj() @ _pair_amplitudes(state, q1, q2)
    probs = np.einsum("ij,ij->i", rest, rest.conj()).real
    if isinstance(source, np.random.Generator):
        k = int(source.choice(4, p=probs / probs.sum()))
        outcome = ALL_BELL_OUTCOMES[k]
    else:
        outcome = source if isinstance(source, BellOutcome) else BellOutcome(*source)
        k = outcome.index
        if probs[k] <= BRANCH_EPS:
            raise ZeroProbabilityBranch(f"Bell outcome {tuple(outcome)} has probability {probs[k]:.3g}")
    residual = rest[k] / np.sqrt(probs[k])
    if discard:
        return outcome, StateVector._wrap(residual, state.num_qubits - 2)
    rows = np.outer(_BELL_BASIS[k], residual)
    return outcome, _restore_pair(rows, state.num_qubits, q1, q2)


def measure_computational(
    state: StateVector, qubits: Sequence[int], source
) -> tuple[tuple[int, ...], StateVector]:
    """Joint Z-basis measurement of ``qubits``; ``source`` is a generator or forced bits."""
    qubits = list(qubits)
    if not qubits:
        raise QuantumStateError("nothing to measure")
    for q in qubits:
        _check_index(state, q)
    if len(set(qubits)) != len(qubits):
        raise QuantumStateError("duplicate qubits in measurement")
    k = len(qubits)
    psi = np.moveaxis(state._tensor_view(), qubits, list(range(k))).reshape(2**k, -1)
    probs = np.sum(np.abs(psi) ** 2, axis=1)
    if isinstance(source, np.random.Generator):
        idx = int(source.choice(2**k, p=probs / probs.sum()))
    else:
        bits = tuple(int(b) for b in source)
        if len(bits) != k:
            raise QuantumStateError(f"forced outcome has {len(bits)} bits, expected {k}")
        idx = int("".join(map(str, bits)), 2) if k else 0
        if probs[idx] <= BRANCH_EPS:
            raise ZeroProbabilityBranch(f"outcome {bits} has probability {probs[idx]:.3g}")
    out = np.zeros_like(psi)
    out[idx] = psi[idx] / np.sqrt(probs[idx])
    out = np.moveaxis(out.reshape((2,) * state.num_qubits), list(range(k)), qubits)
    bits = tuple(int(b) for b in format(idx, f"0{k}b"))
    return bits, StateVector(out, check=False)


def computational_probabilities(state: StateVector, qubits: Sequence[int]) -> np.ndarray:
    qubits = list(qubits)
    k = len(qubits)
    psi = np.moveaxis(state._tensor_view(), qubits, list(range(k))).reshape(2**k, -1)
    return np.sum(np.abs(psi) ** 2, axis=1)


def project_out(state: StateVector, qubits: Sequence[int], vector: StateVector) -> StateVector:
    """Contract ``<vector|`` on ``qubits`` and drop them from the register.

    The qubits must already be in the pure product state ``vector``
    (e.g. right after a projective measurement); otherwise the remaining
    norm falls short of 1 and ``QuantumStateError`` is raised.
    """
    qubits = list(qubits)
    k = len(qubits)
    if vector.num_qubits != k:
        raise QuantumStateError("projection vector size does not match qubit count")
    psi = np.moveaxis(state._tensor_view(), qubits, list(range(k))).reshape(2**k, -1)
    rest = vector.amplitudes.conj() @ psi
    if abs(np.vdot(rest, rest).real - 1) > PROTOCOL_ATOL:
        raise QuantumStateError("qubits are not in the given product state")
    return StateVector(rest, check=False)


def permute_qubits(state: StateVector, order: Sequence[int]) -> StateVector:
    """New register whose qubit ``i`` is old qubit ``order[i]``."""
    if sorted(order) != list(range(state.num_qubits)):
        raise QuantumStateError(f"{order} is not a permutation of the register")
    return StateVector(np.transpose(state._tensor_view(), list(order)), check=False)


def partial_trace(state: StateVector, keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (in the given order)."""
    keep = list(keep)
    if not keep:
        raise QuantumStateError("keep set must be nonempty")
    for q in keep:
        _check_index(state, q)
    if len(set(keep)) != len(keep):
        raise QuantumStateError("duplicate qubits in keep set")
    k = len(keep)
    rest = [q for q in range(state.num_qubits) if q not in keep]
    psi = np.transpose(state._tensor_view(), keep + rest).reshape(2**k, -1)
    return psi @ psi.conj().T


def check_density_matrix(rho: np.ndarray, atol: float = ALGEBRA_ATOL) -> bool:
    rho = np.asarray(rho)
    hermitian = np.allclose(rho, rho.conj().T, rtol=0, atol=atol)
    unit_trace = abs(np.trace(rho) - 1) <= atol
    psd = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -atol
    return bool(hermitian and unit_trace and psd)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = np.asarray(rho) - np.asarray(sigma)
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


@dataclass(frozen=True)
class SchmidtDecomposition:
    coefficients: np.ndarray
    left_basis: np.ndarray  # rows are |alpha_k>
    right_basis: np.ndarray  # rows are |beta_k>

    def reconstruct(self) -> StateVector:
        amps = sum(
            a * np.kron(l, r)
            for a, l, r in zip(self.coefficients, self.left_basis, self.right_basis)
        )
        return StateVector(amps, check=False)


def _gauge_phase(vec: np.ndarray) -> complex:
    """Phase that makes the first non-negligible component real and nonnegative."""
    for c in vec:
        if abs(c) > 1e-9:
            return abs(c) / c
    return 1.0


def schmidt_decompose(state: StateVector, cut_after: int = 0) -> SchmidtDecomposition:
    """Schmidt form across the cut between qubit ``cut_after`` and ``cut_after + 1``.

    Coefficients come out descending.  Each left vector is gauge-fixed so its
    leading non-negligible component is real and nonnegative (the right
    vector absorbs the compensating phase); with degenerate coefficients the
    basis is whatever LAPACK's SVD returns, and only reconstruction is
    guaranteed.
    """
    if not 0 <= cut_after < state.num_qubits - 1:
        raise QuantumStateError(f"cut after qubit {cut_after} does not split the register")
    left_dim = 2 ** (cut_after + 1)
    m = state.amplitudes.reshape(left_dim, -1)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    left = u.T.copy()
    right = vh.copy()
    for k in range(len(s)):
        ph = _gauge_phase(left[k])
        left[k] *= ph
        right[k] /= ph
    return SchmidtDecomposition(s, left, right)


def overlap(a: StateVector, b: StateVector) -> float:
    if a.num_qubits != b.num_qubits:
        raise QuantumStateError(f"dimension mismatch: {a.num_qubits} vs {b.num_qubits} qubits")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)))


def phase_equal(a: StateVector, b: StateVector, atol: float = PROTOCOL_ATOL) -> tuple[bool, float]:
    """Equality up to global phase: ``|<a|b>| >= 1 - atol``."""
    mag = overlap(a, b)
    return mag >= 1 - atol, mag


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    from scipy.stats import unitary_group

    return unitary_group.rvs(dim, random_state=rng)


def random_state(rng: np.random.Generator, num_qubits: int = 1) -> StateVector:
    v = rng.normal(size=2**num_qubits) + 1j * rng.normal(size=2**num_qubits)
    return StateVector.normalized(v)


_PAULI_POWERS = {(x, z): np.linalg.matrix_power(X, x) @ np.linalg.matrix_power(Z, z) for x in (0, 1) for z in (0, 1)}
for _m in _PAULI_POWERS.values():
    _m.setflags(write=False)


def pauli_power(x: int, z: int) -> np.ndarray:
    """The operator ``X^x Z^z``."""
    return _PAULI_POWERS[int(x), int(z)]
