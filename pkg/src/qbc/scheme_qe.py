"""
Broadcast by quantum encryption.

Shared (r+1)-qubit GHZ states act as a reusable key. For payload bit p,
Trent prepares one carrier |p> per designated user, CNOTs it from his key
qubit T and applies the user's keyed H. The user undoes the H, CNOTs from
her own key qubit, and reads p in Z. The carriers then factor out and the
key state is back to its pre-round value.

Register layout for one key state during a round: qubit 0 is T, qubit j is
A_j, and carrier k (for subset[k]) sits at r+1+k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adversary import AttackModel, apply_attack, attack_branches
from .checks import keyed_h, mismatch_rate
from .errors import ConfigError, QbcError
from .keys import AuthKey, KeyRegistry
from .qsim import (
    MAX_QUBITS,
    Gate,
    GhzOutcome,
    StateVector,
    apply_cnot,
    apply_gate,
    discard_qubits,
    ghz_plus,
    make_basis_state,
    measure,
    minus_state,
    outcome_distribution,
    plus_state,
    tensor,
)
from .session import CheckResult, SessionReport, hex_to_bits, random_bits, sampled_check
from .transcript import MEASUREMENT, OPERATION, Transcript

DECOY_STATES = ("0", "1", "+", "-")


class KeyStateConsumed(QbcError):
    """A key state was used twice within one round."""


@dataclass
class QeSessionConfig:
    r: int = 2
    subset: tuple[int, ...] = (1, 2)
    payload_bits: str = "10100101"
    n_key_states: int = 16
    sample_fraction: float = 0.25
    decoy_rate: float = 0.2
    abort_threshold: float = 0.0
    decoy_threshold: float = 0.0
    rounds: int = 1
    seed: int | None = 0
    impostors: tuple[int, ...] = ()

    def __post_init__(self):
        self.payload_bits = hex_to_bits(self.payload_bits)
        self.subset = tuple(sorted(set(self.subset)))
        if self.r < 1:
            raise ConfigError("need at least one user")
        if not self.subset:
            raise ConfigError("subset of designated users must be nonempty")
        if not set(self.subset) <= set(range(1, self.r + 1)):
            raise ConfigError(f"subset {self.subset} is not within users 1..{self.r}")
        if self.r + 1 + len(self.subset) > MAX_QUBITS:
            raise ConfigError(f"r={self.r} with {len(self.subset)} carriers exceeds {MAX_QUBITS} qubits")
        if not 0 <= self.sample_fraction < 1:
            raise ConfigError("sample_fraction must lie in [0, 1)")
        if not 0 <= self.decoy_rate < 1:
            raise ConfigError("decoy_rate must lie in [0, 1)")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if not self.payload_bits:
            raise ConfigError("payload is empty")
        if len(self.payload_bits) > self.n_key_states - self.n_samples:
            raise ConfigError(
                f"{len(self.payload_bits)}-bit payload needs that many key states; "
                f"{self.n_key_states} states leave {self.n_key_states - self.n_samples} after sampling"
            )
        for j in self.impostors:
            if not 1 <= j <= self.r:
                raise ConfigError(f"impostor index {j} is not a user")

    @property
    def n_samples(self) -> int:
        return math.ceil(self.sample_fraction * self.n_key_states)

    @property
    def ak_len(self) -> int:
        # one bit per key state for the H layer, then one per key state per round for carriers
        return self.n_key_states * (1 + self.rounds)


@dataclass
class PayloadQubitRecord:
    index: int
    bit: int
    carriers: dict[int, int]      # user -> carrier qubit index
    h_bits: dict[int, int]        # user -> keyed-H bit on that carrier


@dataclass
class QuantumKey:
    r: int
    states: dict[int, StateVector]
    in_use: set[int] = field(default_factory=set)

    def acquire(self, i: int) -> StateVector:
        if i in self.in_use:
            raise KeyStateConsumed(f"key state {i} already carries a payload bit this round")
        if i not in self.states:
            raise KeyStateConsumed(f"key state {i} does not exist")
        self.in_use.add(i)
        return self.states[i]

    def release(self, i: int, state: StateVector) -> None:
        self.states[i] = state
        self.in_use.discard(i)


# ---------------------------------------------------------------------------
# Key establishment
# ---------------------------------------------------------------------------

def establish_quantum_key(config: QeSessionConfig, keys: dict[int, str],
                          rng: np.random.Generator, attack: AttackModel | None = None,
                          user_keys: dict[int, str] | None = None,
                          transcript: Transcript | None = None):
    """Distribute keyed Psi1 states, check a sample, keep the rest as key."""
    attack = attack or AttackModel.none()
    user_keys = user_keys or keys
    tr = transcript if transcript is not None else Transcript()
    n, r = config.n_key_states, config.r
    for j in range(1, r + 1):
        if len(keys[j]) < n:
            raise ConfigError(f"key of Alice_{j} has {len(keys[j])} bits, need {n}")
    states, eve = {}, {}
    for i in range(n):
        s = keyed_h(ghz_plus(r + 1), [int(keys[j][i]) for j in range(1, r + 1)])
        if attack.kind != "none" and attack.stage == "forward":
            s, _ = apply_attack(s, list(range(1, r + 1)), attack, rng)
            eve[i] = s
        states[i] = keyed_h(s, [int(user_keys[j][i]) for j in range(1, r + 1)])
    tr.record("prepare", "Trent", OPERATION, n_key_states=n)
    psi1 = GhzOutcome(r + 1, "+", "0" * (r + 1))
    if config.n_samples == 0:
        return QuantumKey(r, states), CheckResult(True, 0.0, [])
    check = sampled_check(
        states, lambda pos: psi1, r + 1, config.sample_fraction, config.abort_threshold, rng, tr,
        key_bits=lambda pos: tuple(int(keys[j][pos]) for j in range(1, r + 1)),
        impostor_states=eve if attack.impersonates else None,
    )
    return QuantumKey(r, states), check


# ---------------------------------------------------------------------------
# Encryption / decryption
# ---------------------------------------------------------------------------

def encrypt_payload(key_state: StateVector, bit: int, subset: Sequence[int],
                    h_bits: dict[int, int], index: int = 0
                    ) -> tuple[StateVector, PayloadQubitRecord]:
    """Append |p> per designated user, CNOT from T onto each, then keyed H."""
    n = key_state.n_qubits
    s = tensor(key_state, make_basis_state(str(bit) * len(subset)))
    carriers = {}
    for k, x in enumerate(subset):
        q = n + k
        s = apply_cnot(s, 0, q)
        if h_bits[x]:
            s = apply_gate(s, Gate.H, q)
        carriers[x] = q
    return s, PayloadQubitRecord(index, bit, carriers, dict(h_bits))


def decrypt_payload(state: StateVector, carrier: int, key_qubit: int, h_bit: int) -> StateVector:
    """The user's side before reading the carrier in Z: keyed H, then CNOT."""
    if h_bit:
        state = apply_gate(state, Gate.H, carrier)
    return apply_cnot(state, key_qubit, carrier)


def decrypt_distribution(state: StateVector, record: PayloadQubitRecord, user: int) -> dict:
    """Exact Z distribution of ``user``'s carrier after her decryption."""
    s = decrypt_payload(state, record.carriers[user], user, record.h_bits[user])
    return outcome_distribution(s, [record.carriers[user]], "Z")


def carrier_marginals(state: StateVector, carrier: int) -> dict[str, dict]:
    """What a keyless interceptor sees measuring one carrier in Z or X."""
    return {b: outcome_distribution(state, [carrier], b) for b in ("Z", "X")}


def finish_round(state: StateVector, record: PayloadQubitRecord, rng: np.random.Generator,
                 user_keys_h: dict[int, int] | None = None):
    """
    All designated users decrypt and read their carriers; the carriers are
    then dropped, leaving the key state. Returns (results, key state).
    """
    h = user_keys_h if user_keys_h is not None else record.h_bits
    for x, q in record.carriers.items():
        state = decrypt_payload(state, q, x, h[x])
    qs = sorted(record.carriers.values())
    bits, state = measure(state, qs, "Z", rng)
    results = {x: int(bits[qs.index(q)]) for x, q in record.carriers.items()}
    return results, discard_qubits(state, qs, bits)


# ---------------------------------------------------------------------------
# Decoys
# ---------------------------------------------------------------------------

_DECOY_VECTORS = {
    "0": lambda: make_basis_state("0"),
    "1": lambda: make_basis_state("1"),
    "+": plus_state,
    "-": minus_state,
}


def decoy_state(label: str) -> StateVector:
    return _DECOY_VECTORS[label]()


def decoy_basis(label: str) -> str:
    return "Z" if label in "01" else "X"


@dataclass(frozen=True)
class WireItem:
    kind: str          # "carrier" or "decoy"
    ref: int | str     # payload index, or decoy preparation label


def insert_decoys(carriers: Sequence[int], decoy_rate: float, rng: np.random.Generator
                  ) -> tuple[list[WireItem], dict[int, str]]:
    """
    Splice decoys into a carrier sequence so that about ``decoy_rate`` of the
    wire is decoys. Returns the wire and {wire position: decoy label}.
    """
    if not 0 <= decoy_rate < 1:
        raise ConfigError("decoy_rate must lie in [0, 1)")
    n_decoys = math.ceil(decoy_rate * len(carriers) / (1 - decoy_rate)) if decoy_rate else 0
    total = len(carriers) + n_decoys
    decoy_pos = set(int(p) for p in rng.choice(total, size=n_decoys, replace=False)) if n_decoys else set()
    wire, decoys, it = [], {}, iter(carriers)
    for pos in range(total):
        if pos in decoy_pos:
            label = DECOY_STATES[int(rng.integers(0, 4))]
            wire.append(WireItem("decoy", label))
            decoys[pos] = label
        else:
            wire.append(WireItem("carrier", next(it)))
    return wire, decoys


@dataclass
class DecoyVerdict:
    passed: bool
    error_rate: float
    errors: int
    checked: int


def verify_decoys(reports: dict[int, str], decoys: dict[int, str], threshold: float = 0.0
                  ) -> DecoyVerdict:
    """``reports`` holds the receiver's result per decoy position, measured in its basis."""
    errors = sum(reports[pos] != label for pos, label in decoys.items())
    rate = mismatch_rate(errors, len(decoys))
    return DecoyVerdict(rate <= threshold, rate, errors, len(decoys))


def decoy_error_probability(attack: AttackModel) -> float:
    """Exact per-decoy error for an attack on a uniformly random decoy."""
    total = 0.0
    for label in DECOY_STATES:
        basis = decoy_basis(label)
        for p, s in attack_branches(decoy_state(label), [0], attack):
            dist = outcome_distribution(s, [0], basis)
            total += p * (1 - dist[label]) / len(DECOY_STATES)
    return total


# ---------------------------------------------------------------------------
# Whole session
# ---------------------------------------------------------------------------

def _transmit_round(joint: dict[int, StateVector], records: dict[int, PayloadQubitRecord],
                    subset: Sequence[int], config: QeSessionConfig, attack: AttackModel,
                    rng: np.random.Generator, tr: Transcript):
    """Send one batch per designated user; returns per-user decoy verdicts."""
    verdicts = {}
    payload_attack = attack.kind != "none" and attack.stage == "payload"
    for x in subset:
        wire, decoys = insert_decoys(sorted(records), config.decoy_rate, rng)
        reports = {}
        for pos, item in enumerate(wire):
            if item.kind == "carrier":
                i = item.ref
                if payload_attack:
                    joint[i], _ = apply_attack(joint[i], [records[i].carriers[x]], attack, rng)
                continue
            s = decoy_state(item.ref)
            if payload_attack:
                s, _ = apply_attack(s, [0], attack, rng)
            reports[pos], _ = measure(s, [0], decoy_basis(item.ref), rng)
        tr.announce("decoys", "Trent", user=f"Alice_{x}",
                    positions=sorted(decoys), bases="".join(decoy_basis(decoys[p]) for p in sorted(decoys)))
        tr.announce("decoys", f"Alice_{x}", results={p: reports[p] for p in sorted(reports)})
        verdicts[x] = verify_decoys(reports, decoys, config.decoy_threshold)
        tr.announce("decoys", "Trent", user=f"Alice_{x}", error_rate=verdicts[x].error_rate,
                    passed=verdicts[x].passed)
    return verdicts


def run_qe_session(config: QeSessionConfig, keys: dict[int, AuthKey | str] | None = None,
                   attack: AttackModel | None = None,
                   rng: np.random.Generator | None = None,
                   registry: KeyRegistry | None = None) -> SessionReport:
    attack = attack or AttackModel.none()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    tr = Transcript()
    if keys is None:
        registry = registry or KeyRegistry.generate(config.r, rng, group=False)
        keys = {}
        for j in range(1, config.r + 1):
            start = registry[f"Alice_{j}"].counter
            keys[j] = registry.stretch(f"Alice_{j}", config.ak_len)
            tr.announce("prepare", "Trent", party=f"Alice_{j}", counter=[start, keys[j].end_counter])
    key_bits = {j: (k.bits if isinstance(k, AuthKey) else k) for j, k in keys.items()}
    for j, k in key_bits.items():
        if len(k) < config.ak_len:
            raise ConfigError(f"key of Alice_{j} has {len(k)} bits, need {config.ak_len}")
    user_keys = {
        j: "".join(map(str, random_bits(rng, config.ak_len))) if j in config.impostors else k
        for j, k in key_bits.items()
    }

    report = SessionReport("qe", config.r, config.n_key_states, attack.describe(), False, 0.0,
                           None, config.payload_bits, transcript=tr)
    qkey, check = establish_quantum_key(config, key_bits, rng, attack, user_keys, tr)
    report.samples = check.samples
    report.mismatch_rate = check.mismatch_rate
    if not check.passed:
        report.aborted_at = "check"
        return report

    m, n = len(config.payload_bits), config.n_key_states
    slots = sorted(qkey.states)[:m]
    decoded = {x: [] for x in config.subset}
    for rnd in range(config.rounds):
        seg = n * (1 + rnd)
        joint, records = {}, {}
        for g, i in enumerate(slots):
            h = {x: int(key_bits[x][seg + i]) for x in config.subset}
            joint[g], records[g] = encrypt_payload(qkey.acquire(i), int(config.payload_bits[g]),
                                                   config.subset, h, g)
        tr.record("encrypt", "Trent", OPERATION, round=rnd, key_states=slots)
        verdicts = _transmit_round(joint, records, config.subset, config, attack, rng, tr)
        if not all(v.passed for v in verdicts.values()):
            report.aborted_at = f"decoys (round {rnd})"
            report.mismatch_rate = max(v.error_rate for v in verdicts.values())
            for i in slots:
                qkey.in_use.discard(i)
            return report
        for g, i in enumerate(slots):
            h_user = {x: int(user_keys[x][seg + i]) for x in config.subset}
            results, key_after = finish_round(joint[g], records[g], rng, h_user)
            qkey.release(i, key_after)
            for x in config.subset:
                decoded[x].append(str(results[x]))
        tr.record("decrypt", "users", MEASUREMENT, round=rnd,
                  results={f"Alice_{x}": "".join(decoded[x][-m:]) for x in config.subset})

    report.passed = True
    for x in config.subset:
        bits = "".join(decoded[x])
        rounds = {bits[k * m:(k + 1) * m] for k in range(config.rounds)}
        report.decoded[f"Alice_{x}"] = rounds.pop() if len(rounds) == 1 else ""
    report.decode_ok = all(v == config.payload_bits for v in report.decoded.values())
    tr.record("decode", "all", MEASUREMENT, decoded=dict(report.decoded), ok=report.decode_ok)
    return report
