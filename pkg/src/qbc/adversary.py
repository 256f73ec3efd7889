"""
Eavesdropper strategies acting on qubits in transit, plus exact and sampled
evaluation of the error rate they induce in the correlation checks.

Publish policies for intercept-measure attacks:

``consistent-guess``
    Eve impersonates the users during the check. She keeps the qubits she
    measured and, once Trent announces the check basis, measures them in that
    basis and publishes the result. She never applies the keyed H layer
    because she does not hold the key.
``silent``
    Eve only taps: she forwards the collapsed qubits and the legal users
    publish honestly.

Probe and tamper attacks are always silent, and so is an intercept at the
return or payload stage, since no check follows it that Eve could answer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .checks import CheckScenario, correlation_ok, measure_check, scenario
from .errors import ConfigError, SizeError
from .qsim import (
    PauliOp,
    StateVector,
    apply_gate,
    apply_unitary,
    is_unitary,
    make_basis_state,
    measure,
    outcome_distribution,
    post_measurement_branches,
    tensor,
)

log = logging.getLogger(__name__)

KINDS = ("none", "intercept", "probe", "tamper")
POLICIES = ("consistent-guess", "silent")
STAGES = ("forward", "return", "payload")
INTERCEPT_BASES = ("Z", "X", "bell", "random")  # random: Z or X, fair coin per interception


@dataclass(frozen=True)
class AttackModel:
    kind: str = "none"
    basis: str = "Z"
    policy: str = "consistent-guess"
    unitary: np.ndarray | None = field(default=None, compare=False, repr=False)
    probe_qubits: int = 2
    op: PauliOp = PauliOp.I
    target: int | None = None
    stage: str = "forward"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"attack type must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "intercept":
            if self.basis not in INTERCEPT_BASES:
                raise ConfigError(
                    f"intercept basis must be one of {INTERCEPT_BASES}, got {self.basis!r}")
            if self.policy not in POLICIES:
                raise ConfigError(f"publish policy must be one of {POLICIES}")
        if self.kind == "probe":
            if self.unitary is None or not is_unitary(self.unitary):
                raise ConfigError("probe unitary must satisfy E E^dagger = I")
        if self.stage not in STAGES:
            raise ConfigError(f"attack stage must be one of {STAGES}")

    @classmethod
    def none(cls) -> "AttackModel":
        return cls()

    @classmethod
    def intercept(cls, basis: str, policy: str = "consistent-guess", stage: str = "forward"):
        return cls("intercept", basis=basis, policy=policy, stage=stage)

    @classmethod
    def probe(cls, unitary: np.ndarray, probe_qubits: int | None = None, stage: str = "forward"):
        u = np.asarray(unitary, dtype=complex)
        if probe_qubits is None:
            probe_qubits = 2
        return cls("probe", unitary=u, probe_qubits=probe_qubits, stage=stage)

    @classmethod
    def tamper(cls, op: PauliOp, target: int | None = 0, stage: str = "return"):
        return cls("tamper", op=op, target=target, stage=stage)

    @property
    def impersonates(self) -> bool:
        return (self.kind == "intercept" and self.policy == "consistent-guess"
                and self.stage == "forward")

    def describe(self) -> str:
        if self.kind == "intercept":
            return f"intercept-{self.basis}/{self.policy}@{self.stage}"
        if self.kind == "tamper":
            where = "all" if self.target is None else self.target
            return f"tamper-{self.op.name}[{where}]@{self.stage}"
        if self.kind == "probe":
            return f"probe({self.unitary.shape[0]})@{self.stage}"
        return "none"

    @classmethod
    def from_dict(cls, spec: dict | None, base_dir: Path | None = None) -> "AttackModel":
        if not spec:
            return cls.none()
        kind = spec.get("type", "none")
        stage = spec.get("stage")
        extra = {"stage": stage} if stage else {}
        if kind == "none":
            return cls.none()
        if kind == "intercept":
            return cls.intercept(spec.get("basis", "Z"), spec.get("policy", "consistent-guess"),
                                 **extra)
        if kind == "tamper":
            target = spec.get("target", 0)
            return cls.tamper(PauliOp[spec.get("op", "X")], target, **extra)
        if kind == "probe":
            path = Path(spec["unitary_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return cls.probe(load_unitary(path), spec.get("probe_qubits"), **extra)
        raise ConfigError(f"unknown attack type {kind!r}")


@dataclass
class EveRecord:
    outcomes: list = field(default_factory=list)
    probe_qubits: tuple[int, ...] = ()


def load_unitary(path) -> np.ndarray:
    """
    Text format: one matrix row per line, entries as whitespace-separated
    ``re im`` pairs; blank lines and ``#`` comments are ignored.
    """
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if len(vals) % 2:
            raise ConfigError(f"{path}:{lineno}: odd number of reals in a row of complex pairs")
        rows.append([complex(a, b) for a, b in zip(vals[::2], vals[1::2])])
    m = np.array(rows, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{path}: matrix must be square, got {m.shape}")
    return m


def save_unitary(path, m: np.ndarray) -> None:
    lines = [" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) for row in np.asarray(m)]
    Path(path).write_text("\n".join(lines) + "\n")


def _with_probe(state: StateVector, transit: Sequence[int], model: AttackModel):
    k = len(transit)
    dim = model.unitary.shape[0]
    if dim != 2 ** (k + model.probe_qubits):
        raise SizeError(
            f"probe unitary has dimension {dim}, transit+probe space is "
            f"2^({k}+{model.probe_qubits})"
        )
    n = state.n_qubits
    extended = tensor(state, make_basis_state("0" * model.probe_qubits))
    probe = tuple(range(n, n + model.probe_qubits))
    return apply_unitary(extended, model.unitary, list(transit) + list(probe)), probe


def _bell_pairs(transit: Sequence[int]) -> list[list[int]]:
    return [list(transit[i:i + 2]) for i in range(0, len(transit) - 1, 2)]


def apply_attack(state: StateVector, transit: Sequence[int], model: AttackModel,
                 rng: np.random.Generator) -> tuple[StateVector, EveRecord]:
    rec = EveRecord()
    if model.kind == "none":
        return state, rec
    if model.kind == "intercept":
        if model.basis == "random":
            basis = "Z" if rng.integers(0, 2) == 0 else "X"
            label, state = measure(state, list(transit), basis, rng)
            rec.outcomes.append(f"{basis}:{label}")
        elif model.basis == "bell":
            for pair in _bell_pairs(transit):
                label, state = measure(state, pair, "bell", rng)
                rec.outcomes.append(label)
        else:
            label, state = measure(state, list(transit), model.basis, rng)
            rec.outcomes.append(label)
        return state, rec
    if model.kind == "probe":
        state, rec.probe_qubits = _with_probe(state, transit, model)
        return state, rec
    targets = list(transit) if model.target is None else [transit[model.target]]
    for q in targets:
        state = apply_gate(state, model.op, q)
    return state, rec


def attack_branches(state: StateVector, transit: Sequence[int], model: AttackModel):
    """Exact version of apply_attack: list of (probability, resulting state)."""
    if model.kind == "intercept" and model.basis == "random":
        return [
            (0.5 * p, s)
            for basis in ("Z", "X")
            for p, s in attack_branches(state, transit, AttackModel.intercept(basis, model.policy))
        ]
    if model.kind == "intercept":
        groups = _bell_pairs(transit) if model.basis == "bell" else [list(transit)]
        kind = "bell" if model.basis == "bell" else model.basis
        branches = [(1.0, state)]
        for g in groups:
            branches = [
                (p * q, s2)
                for p, s in branches
                for _, q, s2 in post_measurement_branches(s, g, kind)
            ]
        return branches
    if model.kind == "probe":
        return [(1.0, _with_probe(state, transit, model)[0])]
    if model.kind == "tamper":
        return [(1.0, apply_attack(state, transit, model, np.random.default_rng(0))[0])]
    return [(1.0, state)]


def exact_error_rate(scn: CheckScenario, attack: AttackModel, check_basis: str) -> float:
    """
    Probability that the published check results for this position violate
    the honest correlation rule, by exact enumeration over Eve's outcomes and
    the parties' outcomes.
    """
    if check_basis not in ("Z", "X"):
        raise ValueError(f"unsupported check basis {check_basis!r}")
    parties = list(range(scn.n_parties))
    total = 0.0
    for p, s in attack_branches(scn.transit, scn.transit_qubits, attack):
        measured = s if attack.impersonates else scn.unkey(s)
        dist = outcome_distribution(measured, parties, check_basis)
        total += p * sum(q for o, q in dist.items() if not correlation_ok(scn.expected, check_basis, o))
    return total


def sample_check(scn: CheckScenario, attack: AttackModel, check_basis: str,
                 rng: np.random.Generator) -> bool:
    """One sampled check position; True when the published results mismatch."""
    s, _ = apply_attack(scn.transit, scn.transit_qubits, attack, rng)
    measured = s if attack.impersonates else scn.unkey(s)
    outcome, _ = measure_check(measured, scn.n_parties, check_basis, rng)
    return not correlation_ok(scn.expected, check_basis, outcome)


def monte_carlo_error_rate(scn: CheckScenario, attack: AttackModel, check_basis: str,
                           trials: int, rng: np.random.Generator) -> float:
    errors = sum(sample_check(scn, attack, check_basis, rng) for _ in range(trials))
    return errors / trials


# ---------------------------------------------------------------------------
# Stinespring probe decomposition
# ---------------------------------------------------------------------------

# coefficient names by (Trent's bit, users' bits)
COEFF_NAMES = {
    (0, "00"): "alpha1", (0, "01"): "beta1", (0, "10"): "gamma1", (0, "11"): "delta1",
    (1, "11"): "delta2", (1, "10"): "gamma2", (1, "01"): "beta2", (1, "00"): "alpha2",
}


@dataclass(frozen=True)
class ProbeDecomposition:
    """
    Eve's entangled state written as
    1/sqrt2 * sum_{t,a} c_{t,a} |t>|a>|eps_{t,a}> with unit probe vectors.
    """

    coefficients: dict[str, complex]
    probe_states: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> complex:
        return self.coefficients[name]

    def branch_norms(self) -> tuple[float, float]:
        """Sum of |c|^2 over each of Trent's branches; both are 1 for a unitary probe."""
        n0 = sum(abs(self.coefficients[COEFF_NAMES[(0, a)]]) ** 2 for a in ("00", "01", "10", "11"))
        n1 = sum(abs(self.coefficients[COEFF_NAMES[(1, a)]]) ** 2 for a in ("00", "01", "10", "11"))
        return n0, n1

    @property
    def epsilon(self) -> float:
        return 1 - abs(self.coefficients["alpha1"]) ** 2

    def is_symmetric(self, tol: float = 1e-6) -> bool:
        return abs(abs(self.coefficients["alpha1"]) - abs(self.coefficients["delta2"])) <= tol


def decompose_probe(unitary: np.ndarray, initial: StateVector, probe_qubits: int = 2
                    ) -> ProbeDecomposition:
    """Apply E to (A_1, A_2, probe) of a three-qubit ``initial`` and read off the coefficients."""
    if initial.n_qubits != 3:
        raise SizeError("probe decomposition is defined for (T, A_1, A_2)")
    model = AttackModel.probe(unitary, probe_qubits)
    state, _ = _with_probe(initial, [1, 2], model)
    d = 2**probe_qubits
    amps = state.amps.reshape(2, 4, d)
    coeffs, probes = {}, {}
    for (t, a), name in COEFF_NAMES.items():
        branch = amps[t, int(a, 2)] * np.sqrt(2)
        mag = float(np.linalg.norm(branch))
        if mag < 1e-15:
            coeffs[name], probes[name] = 0j, np.eye(d, dtype=complex)[0]
            continue
        lead = branch[np.argmax(np.abs(branch))]
        phase = lead / abs(lead)
        coeffs[name] = mag * phase
        probes[name] = branch / (mag * phase)
    return ProbeDecomposition(coeffs, probes)


def probe_epsilon(unitary: np.ndarray, probe_qubits: int = 2, tol: float = 1e-6) -> float:
    """1 - |alpha1|^2 for a probe acting on the unkeyed, unscrambled check state."""
    dec = decompose_probe(unitary, scenario("Phi1").transit, probe_qubits)
    if not dec.is_symmetric(tol):
        log.warning(
            "asymmetric probe: |alpha1|=%.6g, |delta2|=%.6g; the Z-check error is "
            "1 - (|alpha1|^2 + |delta2|^2)/2", abs(dec["alpha1"]), abs(dec["delta2"]),
        )
    return dec.epsilon


def correct_coefficient(initial_pattern: str) -> str:
    """Name of the coefficient that carries the honest users' bits in Trent's 0-branch."""
    t = int(initial_pattern[0])
    users = "".join(str(int(b) ^ t) for b in initial_pattern[1:])
    return COEFF_NAMES[(0, users)]


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_symmetric_probe(rng: np.random.Generator, probe_qubits: int = 2) -> np.ndarray:
    """
    Random unitary on (A_1, A_2, probe) that commutes with X on both user
    qubits, i.e. treats |a> and |~a> alike. For these probes |alpha1| = |delta2|.
    """
    dim = 2 ** (2 + probe_qubits)
    k = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    k = (k + k.conj().T) / 2
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    s = np.kron(np.kron(x, x), np.eye(2**probe_qubits))
    k = (k + s @ k @ s) / 2
    w, v = np.linalg.eigh(k)
    return (v * np.exp(1j * w)) @ v.conj().T
