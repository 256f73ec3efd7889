"""
Exact statevector simulation for small registers.

Conventions:
- qubit 0 is the leftmost ket symbol; the basis index is the big-endian
  bitstring, so |100> on three qubits is index 4
- states are immutable; gates and measurements return new objects
- X-basis outcomes are reported as '+'/'-' strings, bit 0 <-> '+'
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import sqrt
from typing import Sequence, Union

import numpy as np

from .errors import QubitIndexError, SizeError

MAX_QUBITS = 14
NORM_TOL = 1e-10
EXACT_TOL = 1e-12

_S = 1 / sqrt(2)


class StateVector:
    """Normalized amplitude vector over ``n_qubits`` qubits (read-only)."""

    __slots__ = ("_amps", "_n")

    def __init__(self, amps, *, normalize: bool = False):
        arr = np.array(amps, dtype=complex).reshape(-1)
        size = arr.size
        if size < 2 or size & (size - 1):
            raise SizeError(f"amplitude count must be a power of two >= 2, got {size}")
        n = size.bit_length() - 1
        if n > MAX_QUBITS:
            raise SizeError(f"{n} qubits exceeds the simulator limit of {MAX_QUBITS}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("amplitudes must be finite")
        norm = np.linalg.norm(arr)
        if normalize:
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            arr = arr / norm
        elif abs(norm - 1) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm={norm!r})")
        arr.setflags(write=False)
        self._amps = arr
        self._n = n

    @property
    def amps(self) -> np.ndarray:
        return self._amps

    @property
    def n_qubits(self) -> int:
        return self._n

    def norm(self) -> float:
        return float(np.linalg.norm(self._amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self._amps) ** 2

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        _check_same_dims(self, other)
        return complex(np.vdot(self._amps, other._amps))

    def __len__(self):
        return self._amps.size

    def __repr__(self):
        terms = []
        for idx in np.flatnonzero(np.abs(self._amps) > 1e-9)[:8]:
            a = self._amps[idx]
            terms.append(f"({a.real:+.3f}{a.imag:+.3f}j)|{idx:0{self._n}b}>")
        more = " + ..." if np.count_nonzero(np.abs(self._amps) > 1e-9) > 8 else ""
        return f"StateVector({' + '.join(terms)}{more})"


def _check_same_dims(a: StateVector, b: StateVector) -> None:
    if a.n_qubits != b.n_qubits:
        raise SizeError(f"dimension mismatch: {a.n_qubits} vs {b.n_qubits} qubits")


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

_MATRICES = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    # iY = |0><1| - |1><0|
    "IY": np.array([[0, 1], [-1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _S,
}
for _m in _MATRICES.values():
    _m.setflags(write=False)


class Gate(Enum):
    I = "I"
    X = "X"
    IY = "IY"
    Z = "Z"
    H = "H"

    @property
    def matrix(self) -> np.ndarray:
        return _MATRICES[self.value]


class PauliOp(Enum):
    """The four encoding operations, valued by their two-bit code."""

    I = "00"
    X = "01"
    IY = "10"
    Z = "11"

    @property
    def code(self) -> str:
        return self.value

    @classmethod
    def from_code(cls, bits: str) -> "PauliOp":
        return cls(bits)

    @property
    def gate(self) -> Gate:
        return Gate[self.name]

    @property
    def matrix(self) -> np.ndarray:
        return self.gate.matrix

    @property
    def flips_bit(self) -> bool:
        return self in (PauliOp.X, PauliOp.IY)

    @property
    def flips_phase(self) -> bool:
        return self in (PauliOp.IY, PauliOp.Z)

    @classmethod
    def from_flips(cls, bit: bool, phase: bool) -> "PauliOp":
        return {
            (False, False): cls.I,
            (True, False): cls.X,
            (True, True): cls.IY,
            (False, True): cls.Z,
        }[(bool(bit), bool(phase))]

    def __str__(self):
        return {"I": "I", "X": "sx", "IY": "isy", "Z": "sz"}[self.name]


GateLike = Union[Gate, PauliOp, np.ndarray]


def _as_matrix(gate: GateLike) -> np.ndarray:
    if isinstance(gate, (Gate, PauliOp)):
        return gate.matrix
    m = np.asarray(gate, dtype=complex)
    if m.shape != (2, 2):
        raise SizeError(f"single-qubit gate must be 2x2, got {m.shape}")
    return m


def _check_qubits(n: int, qubits: Sequence[int]) -> list[int]:
    qs = [int(q) for q in qubits]
    for q in qs:
        if not 0 <= q < n:
            raise QubitIndexError(f"qubit {q} out of range for {n}-qubit state")
    if len(set(qs)) != len(qs):
        raise QubitIndexError(f"duplicate qubit indices {qs}")
    return qs


def apply_gate(state: StateVector, gate: GateLike, qubit: int) -> StateVector:
    n = state.n_qubits
    (q,) = _check_qubits(n, [qubit])
    psi = state.amps.reshape([2] * n)
    out = np.tensordot(_as_matrix(gate), psi, axes=([1], [q]))
    out = np.moveaxis(out, 0, q)
    return StateVector(out.reshape(-1))


def apply_gates(state: StateVector, gates: Sequence[tuple[GateLike, int]]) -> StateVector:
    for gate, q in gates:
        state = apply_gate(state, gate, q)
    return state


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    n = state.n_qubits
    c, t = _check_qubits(n, [control, target])
    psi = np.array(state.amps.reshape([2] * n))
    sel = [slice(None)] * n
    sel[c] = 1
    sub = psi[tuple(sel)]
    # target axis shifts down by one once the control axis is indexed away
    t_sub = t - 1 if t > c else t
    psi[tuple(sel)] = np.flip(sub, axis=t_sub).copy()
    return StateVector(psi.reshape(-1))


def apply_unitary(state: StateVector, unitary: np.ndarray, qubits: Sequence[int]) -> StateVector:
    """Apply a 2^k x 2^k unitary to the listed qubits (first listed = most significant)."""
    n = state.n_qubits
    qs = _check_qubits(n, qubits)
    k = len(qs)
    u = np.asarray(unitary, dtype=complex)
    if u.shape != (2**k, 2**k):
        raise SizeError(f"unitary of shape {u.shape} does not act on {k} qubits")
    psi = np.moveaxis(state.amps.reshape([2] * n), qs, range(k)).reshape(2**k, -1)
    out = (u @ psi).reshape([2] * n)
    out = np.moveaxis(out, range(k), qs)
    return StateVector(out.reshape(-1))


def tensor(a: StateVector, b: StateVector) -> StateVector:
    if a.n_qubits + b.n_qubits > MAX_QUBITS:
        raise SizeError(
            f"tensor product of {a.n_qubits}+{b.n_qubits} qubits exceeds {MAX_QUBITS}"
        )
    return StateVector(np.kron(a.amps, b.amps))


def tensor_all(states: Sequence[StateVector]) -> StateVector:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def discard_qubits(state: StateVector, qubits: Sequence[int], bits: str) -> StateVector:
    """
    Project ``qubits`` onto the Z basis values ``bits`` and drop them, keeping
    the remaining qubits in their original order.
    """
    qs = _check_qubits(state.n_qubits, qubits)
    if len(bits) != len(qs):
        raise SizeError(f"{len(qs)} qubits but {len(bits)} bits")
    if len(qs) == state.n_qubits:
        raise SizeError("cannot discard every qubit")
    psi = state.amps.reshape([2] * state.n_qubits)
    index = [slice(None)] * state.n_qubits
    for q, b in zip(qs, bits):
        index[q] = int(b)
    rest = psi[tuple(index)].reshape(-1)
    norm = np.linalg.norm(rest)
    if norm < EXACT_TOL:
        raise ValueError(f"qubits {qs} have zero amplitude on {bits!r}")
    return StateVector(rest / norm)


def states_equal_up_to_phase(a: StateVector, b: StateVector, tol: float = NORM_TOL) -> bool:
    _check_same_dims(a, b)
    return abs(a.inner(b)) >= 1 - tol


def is_unitary(m: np.ndarray, tol: float = NORM_TOL) -> bool:
    m = np.asarray(m, dtype=complex)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(
        m @ m.conj().T, np.eye(m.shape[0]), atol=tol
    )


# ---------------------------------------------------------------------------
# Named states
# ---------------------------------------------------------------------------

def make_basis_state(bits: str) -> StateVector:
    if not bits:
        raise SizeError("basis state needs at least one qubit")
    if len(bits) > MAX_QUBITS:
        raise SizeError(f"{len(bits)} qubits exceeds the simulator limit of {MAX_QUBITS}")
    if set(bits) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {bits!r}")
    amps = np.zeros(2 ** len(bits), dtype=complex)
    amps[int(bits, 2)] = 1
    return StateVector(amps)


def plus_state() -> StateVector:
    return StateVector([_S, _S])


def minus_state() -> StateVector:
    return StateVector([_S, -_S])


class BellOutcome(Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def vector(self) -> np.ndarray:
        return _BELL_BASIS[:, _BELL_ORDER.index(self)]

    @property
    def state(self) -> StateVector:
        return StateVector(self.vector)

    @property
    def parity(self) -> int:
        """Z-parity of the pair: 0 for phi, 1 for psi."""
        return 0 if self in (BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS) else 1

    @property
    def phase(self) -> int:
        """1 when the XX eigenvalue is -1 (phi-, psi-)."""
        return 0 if self in (BellOutcome.PHI_PLUS, BellOutcome.PSI_PLUS) else 1

    @classmethod
    def from_bits(cls, parity: int, phase: int) -> "BellOutcome":
        return {
            (0, 0): cls.PHI_PLUS,
            (0, 1): cls.PHI_MINUS,
            (1, 0): cls.PSI_PLUS,
            (1, 1): cls.PSI_MINUS,
        }[(parity & 1, phase & 1)]


_BELL_ORDER = list(BellOutcome)
_BELL_BASIS = np.array(
    [
        [_S, _S, 0, 0],
        [0, 0, _S, _S],
        [0, 0, _S, -_S],
        [_S, -_S, 0, 0],
    ],
    dtype=complex,
)  # columns: phi+, phi-, psi+, psi-
_BELL_BASIS.setflags(write=False)


@dataclass(frozen=True)
class GhzOutcome:
    """GHZ basis label (|pattern> + sign|~pattern>)/sqrt2, pattern ends in 0."""

    n: int
    sign: str
    pattern: str

    def __post_init__(self):
        if self.n < 2:
            raise SizeError("GHZ states need at least two qubits")
        if len(self.pattern) != self.n or set(self.pattern) - {"0", "1"}:
            raise ValueError(f"pattern {self.pattern!r} is not an {self.n}-bit string")
        if self.pattern[-1] != "0":
            raise ValueError("canonical GHZ pattern must end in 0")
        if self.sign not in "+-" or len(self.sign) != 1:
            raise ValueError(f"sign must be '+' or '-', got {self.sign!r}")

    @classmethod
    def of(cls, sign: str, pattern: str) -> "GhzOutcome":
        """Build from any representative; a pattern ending in 1 is complemented."""
        if pattern and pattern[-1] == "1":
            pattern = _complement(pattern)
        return cls(len(pattern), sign, pattern)

    @classmethod
    def psi(cls, index: int) -> "GhzOutcome":
        """The three-qubit labels Psi1..Psi8."""
        if not 1 <= index <= 8:
            raise ValueError("Psi index runs from 1 to 8")
        k, minus = divmod(index - 1, 2)
        pattern = f"{k & 1}{(k >> 1) & 1}0"
        return cls(3, "-" if minus else "+", pattern)

    @property
    def psi_index(self) -> int | None:
        if self.n != 3:
            return None
        k = int(self.pattern[0]) + 2 * int(self.pattern[1])
        return 1 + 2 * k + (self.sign == "-")

    @classmethod
    def all(cls, n: int) -> list["GhzOutcome"]:
        out = []
        for head in itertools.product("01", repeat=n - 1):
            for sign in "+-":
                out.append(cls(n, sign, "".join(head) + "0"))
        return out

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(2**self.n, dtype=complex)
        v[int(self.pattern, 2)] = _S
        v[int(_complement(self.pattern), 2)] = _S if self.sign == "+" else -_S
        return v

    @property
    def state(self) -> StateVector:
        return StateVector(self.vector)

    def apply_paulis(self, ops: Sequence[PauliOp]) -> "GhzOutcome":
        """Label after local Paulis, one per qubit (global phase dropped)."""
        if len(ops) != self.n:
            raise SizeError(f"need {self.n} operations, got {len(ops)}")
        bits = [int(b) ^ op.flips_bit for b, op in zip(self.pattern, ops)]
        flips = sum(op.flips_phase for op in ops) % 2
        sign = self.sign if not flips else ("-" if self.sign == "+" else "+")
        return GhzOutcome.of(sign, "".join(map(str, bits)))

    def __str__(self):
        idx = self.psi_index
        return f"Psi{idx}" if idx else f"GHZ({self.sign},{self.pattern})"


def _complement(bits: str) -> str:
    return bits.translate(str.maketrans("01", "10"))


def make_ghz(outcome: GhzOutcome) -> StateVector:
    return outcome.state


def ghz_plus(n: int) -> StateVector:
    """(|0...0> + |1...1>)/sqrt2."""
    return make_ghz(GhzOutcome(n, "+", "0" * n))


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _x_basis(k: int) -> np.ndarray:
    h = _MATRICES["H"]
    m = np.ones((1, 1), dtype=complex)
    for _ in range(k):
        m = np.kron(m, h)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def _ghz_basis(k: int) -> tuple[np.ndarray, tuple[GhzOutcome, ...]]:
    labels = tuple(GhzOutcome.all(k))
    m = np.column_stack([g.vector for g in labels])
    m.setflags(write=False)
    return m, labels


def basis_matrix(kind: str, k: int) -> tuple[np.ndarray, list]:
    """Columns are basis vectors on k qubits; second item labels the columns."""
    if kind == "Z":
        return np.eye(2**k, dtype=complex), [format(i, f"0{k}b") for i in range(2**k)]
    if kind == "X":
        labels = [format(i, f"0{k}b").translate(str.maketrans("01", "+-")) for i in range(2**k)]
        return _x_basis(k), labels
    if kind == "bell":
        if k != 2:
            raise SizeError("Bell basis acts on exactly two qubits")
        return _BELL_BASIS, list(_BELL_ORDER)
    if kind == "ghz":
        if k < 2:
            raise SizeError("GHZ basis needs at least two qubits")
        m, labels = _ghz_basis(k)
        return m, list(labels)
    raise ValueError(f"unknown basis {kind!r}")


def _split(state: StateVector, qubits: list[int]) -> np.ndarray:
    n = state.n_qubits
    k = len(qubits)
    return np.moveaxis(state.amps.reshape([2] * n), qubits, range(k)).reshape(2**k, -1)


def _branches(state: StateVector, qubits: Sequence[int], basis: np.ndarray):
    qs = _check_qubits(state.n_qubits, qubits)
    coeffs = basis.conj().T @ _split(state, qs)
    probs = np.sum(np.abs(coeffs) ** 2, axis=1)
    return qs, coeffs, probs


def _collapse(state: StateVector, qs: list[int], vec: np.ndarray, rest: np.ndarray, p: float):
    n = state.n_qubits
    k = len(qs)
    out = np.outer(vec, rest / sqrt(p)).reshape([2] * n)
    out = np.moveaxis(out, range(k), qs)
    return StateVector(out.reshape(-1), normalize=True)


def outcome_distribution(state: StateVector, qubits: Sequence[int], kind: str) -> dict:
    """Exact Born probabilities for measuring ``qubits`` in the named basis."""
    basis, labels = basis_matrix(kind, len(qubits))
    _, _, probs = _branches(state, qubits, basis)
    return {lab: float(p) for lab, p in zip(labels, probs)}


def post_measurement_branches(state: StateVector, qubits: Sequence[int], kind: str):
    """Every outcome with nonzero probability: list of (label, prob, collapsed)."""
    basis, labels = basis_matrix(kind, len(qubits))
    qs, coeffs, probs = _branches(state, qubits, basis)
    out = []
    for j, p in enumerate(probs):
        if p > EXACT_TOL:
            out.append((labels[j], float(p), _collapse(state, qs, basis[:, j], coeffs[j], p)))
    return out


def measure(state: StateVector, qubits: Sequence[int], kind: str, rng: np.random.Generator):
    """Projective measurement; returns (label, collapsed state)."""
    basis, labels = basis_matrix(kind, len(qubits))
    qs, coeffs, probs = _branches(state, qubits, basis)
    j = int(rng.choice(len(probs), p=probs / probs.sum()))
    return labels[j], _collapse(state, qs, basis[:, j], coeffs[j], float(probs[j]))


def measure_z(state: StateVector, qubits: Sequence[int], rng: np.random.Generator):
    return measure(state, qubits, "Z", rng)


def measure_x(state: StateVector, qubits: Sequence[int], rng: np.random.Generator):
    return measure(state, qubits, "X", rng)


def measure_bell(state: StateVector, q1: int, q2: int, rng: np.random.Generator):
    if q1 == q2:
        raise QubitIndexError("Bell measurement needs two distinct qubits")
    return measure(state, [q1, q2], "bell", rng)


def measure_ghz(state: StateVector, qubits: Sequence[int], rng: np.random.Generator):
    if len(qubits) < 2:
        raise SizeError("GHZ measurement needs at least two qubits")
    return measure(state, qubits, "ghz", rng)


def joint_distribution(state: StateVector, groups: Sequence[Sequence[int]], kinds: Sequence[str]) -> dict:
    """
    Exact joint outcome probabilities for measuring several disjoint qubit
    groups, each in its own basis. Keys are tuples of per-group labels.
    """
    if len(groups) != len(kinds):
        raise ValueError("one basis per group")
    flat = [q for g in groups for q in g]
    qs = _check_qubits(state.n_qubits, flat)
    n = state.n_qubits
    dims = [2 ** len(g) for g in groups]
    psi = np.moveaxis(state.amps.reshape([2] * n), qs, range(len(qs)))
    psi = psi.reshape(dims + [-1])
    all_labels = []
    for axis, (g, kind) in enumerate(zip(groups, kinds)):
        basis, labels = basis_matrix(kind, len(g))
        psi = np.moveaxis(np.tensordot(basis.conj().T, psi, axes=([1], [axis])), 0, axis)
        all_labels.append(labels)
    probs = np.sum(np.abs(psi) ** 2, axis=-1)
    out = {}
    for idx in itertools.product(*(range(d) for d in dims)):
        out[tuple(all_labels[a][i] for a, i in enumerate(idx))] = float(probs[idx])
    return out
