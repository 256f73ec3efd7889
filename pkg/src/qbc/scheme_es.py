"""
Broadcast by entanglement swapping.

Trent shares a group key GK with Alice_1..Alice_r. Register layout per GHZ
state: qubit 0 is Trent's T, qubit j is A_j; an eavesdropper's probe, when
present, is appended after A_r. Within a group P(i) (x) Q(i), the Q qubits
follow P's.

GK bit usage: bit i keys the H layer on state i; bits N+2g, N+2g+1 select the
Pauli Alice_r applies to her announced Bell label in group g.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .adversary import AttackModel, apply_attack
from .checks import keyed_h, mismatch_rate
from .errors import ConfigError, IntegrityError, SizeError
from .keys import AuthKey, KeyRegistry
from .qsim import (
    MAX_QUBITS,
    BellOutcome,
    Gate,
    GhzOutcome,
    PauliOp,
    StateVector,
    apply_gate,
    ghz_plus,
    joint_distribution,
    measure_bell,
    tensor,
)
from .session import (
    CheckResult,
    SessionReport,
    check_bitstring,
    random_bits,
    sampled_check,
)
from .transcript import MEASUREMENT, OPERATION, Transcript


@dataclass
class EsSessionConfig:
    r: int = 2
    n_states: int = 16
    sample_fraction: float = 0.25
    abort_threshold: float = 0.0
    secret_bits: str = "01"
    seed: int | None = 0
    impostors: tuple[int, ...] = ()
    publish_masks: bool = False  # publishing leaks the parity of each secret pair

    def __post_init__(self):
        check_bitstring(self.secret_bits, "secret_bits")
        if self.r < 2:
            raise ConfigError("entanglement-swapping broadcast needs r >= 2 users")
        if 2 * (self.r + 1) > MAX_QUBITS:
            raise ConfigError(f"r={self.r} needs {2 * (self.r + 1)} qubits per group")
        if not 0 < self.sample_fraction < 1:
            raise ConfigError("sample_fraction must lie in (0, 1)")
        if len(self.secret_bits) % 2:
            raise ConfigError("secret_bits must have even length")
        if len(self.secret_bits) > 2 * self.n_groups:
            raise ConfigError(
                f"{len(self.secret_bits)} secret bits need {len(self.secret_bits) // 2} "
                f"groups; {self.n_states} states leave only {self.n_groups}"
            )
        for j in self.impostors:
            if not 1 <= j <= self.r:
                raise ConfigError(f"impostor index {j} is not a user")

    @property
    def n_samples(self) -> int:
        return math.ceil(self.sample_fraction * self.n_states)

    @property
    def n_groups(self) -> int:
        return (self.n_states - self.n_samples) // 2

    @property
    def gk_len(self) -> int:
        return self.n_states + 2 * (self.n_states // 2)


@dataclass
class EsRegisters:
    r: int
    states: dict[int, StateVector]
    scrambles: dict[int, tuple[int, ...]]   # Trent-private, per state, users 1..r-1
    key_bits: dict[int, int]
    eve_copies: dict[int, StateVector] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Bell relabelling and the decode table
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def bell_relabel_table() -> dict[tuple[PauliOp, BellOutcome], BellOutcome]:
    """Pauli on the second qubit of each Bell state, classified up to phase."""
    table = {}
    for op in PauliOp:
        for b in BellOutcome:
            v = apply_gate(b.state, op.gate, 1)
            overlaps = [abs(v.inner(c.state)) for c in BellOutcome]
            table[(op, b)] = list(BellOutcome)[int(np.argmax(overlaps))]
    return table


def bell_relabel(outcome: BellOutcome, op: PauliOp) -> BellOutcome:
    return bell_relabel_table()[(op, outcome)]


def bell_unlabel(announced: BellOutcome, op: PauliOp) -> BellOutcome:
    for b in BellOutcome:
        if bell_relabel(b, op) is announced:
            return b
    raise IntegrityError(f"no Bell label maps to {announced} under {op.name}")


def group_pairs(r: int, width: int | None = None) -> list[tuple[int, int]]:
    """(X, X') qubit pairs of a group, Trent's first; width = qubits per state."""
    w = r + 1 if width is None else width
    return [(j, w + j) for j in range(r + 1)]


def _encoded_group(r: int, op: PauliOp, masks: tuple[int, ...]) -> StateVector:
    p = apply_gate(ghz_plus(r + 1), op.gate, 0)
    for j, m in enumerate(masks, start=1):
        if m:
            p = apply_gate(p, Gate.X, j)
    return tensor(p, ghz_plus(r + 1))


def swap_distribution(r: int, op: PauliOp, masks: tuple[int, ...]) -> dict:
    """Exact joint Bell-outcome distribution (Trent, A_1..A_r) of an encoded group."""
    state = _encoded_group(r, op, masks)
    pairs = group_pairs(r)
    return joint_distribution(state, pairs, ["bell"] * len(pairs))


@dataclass(frozen=True)
class SwapDecodeTable:
    r: int
    entries: dict  # (trent, a_1, ..., a_r) -> (PauliOp, masks)

    def __len__(self):
        return len(self.entries)

    def lookup(self, outcomes: tuple[BellOutcome, ...]) -> tuple[PauliOp, tuple[int, ...]]:
        try:
            return self.entries[tuple(outcomes)]
        except KeyError:
            raise IntegrityError(
                f"outcome tuple {[o.value for o in outcomes]} is impossible under honest play"
            ) from None


@lru_cache(maxsize=None)
def build_swap_table(r: int = 2) -> SwapDecodeTable:
    entries: dict = {}
    for op in PauliOp:
        for masks in itertools.product((0, 1), repeat=r - 1):
            for outcome, p in swap_distribution(r, op, masks).items():
                if p < 1e-12:
                    continue
                prev = entries.setdefault(outcome, (op, masks))
                if prev != (op, masks):
                    raise IntegrityError(
                        f"ambiguous outcome {outcome}: {prev} vs {(op, masks)}"
                    )
    return SwapDecodeTable(r, entries)


# ---------------------------------------------------------------------------
# Protocol steps
# ---------------------------------------------------------------------------

def prepare_es(config: EsSessionConfig, gk: str, rng: np.random.Generator,
               transcript: Transcript | None = None) -> EsRegisters:
    if len(gk) < config.n_states:
        raise ConfigError(f"group key has {len(gk)} bits, need {config.n_states}")
    r = config.r
    states, scrambles, key_bits = {}, {}, {}
    for i in range(config.n_states):
        k = int(gk[i])
        s = keyed_h(ghz_plus(r + 1), [k] * r)
        scr = tuple(random_bits(rng, r - 1))
        for j, b in enumerate(scr, start=1):
            if b:
                s = apply_gate(s, Gate.IY, j)
        states[i], scrambles[i], key_bits[i] = s, scr, k
    if transcript is not None:
        transcript.record("prepare", "Trent", OPERATION, n_states=config.n_states,
                          scrambles={i: "".join(map(str, s)) for i, s in scrambles.items()})
    return EsRegisters(r, states, scrambles, key_bits)


def transmit(regs: EsRegisters, attack: AttackModel, rng: np.random.Generator,
             transcript: Transcript | None = None) -> EsRegisters:
    if attack.kind == "none" or attack.stage != "forward":
        return regs
    transit = list(range(1, regs.r + 1))
    eve_log = {}
    for i, s in regs.states.items():
        s2, rec = apply_attack(s, transit, attack, rng)
        regs.states[i] = s2
        regs.eve_copies[i] = s2
        if rec.outcomes:
            eve_log[i] = [str(getattr(o, "value", o)) for o in rec.outcomes]
    if transcript is not None:
        transcript.record("transmit", "Eve", MEASUREMENT, attack=attack.describe(), outcomes=eve_log)
    return regs


def user_unkey_es(regs: EsRegisters, user_keys: dict[int, str],
                  transcript: Transcript | None = None) -> EsRegisters:
    """Each user j undoes H on A_j wherever their copy of GK has a 1."""
    for i, s in regs.states.items():
        for j in range(1, regs.r + 1):
            if user_keys[j][i] == "1":
                s = apply_gate(s, Gate.H, j)
        regs.states[i] = s
    if transcript is not None:
        for j in range(1, regs.r + 1):
            transcript.announce("unkey", f"Alice_{j}", done=True)
    return regs


def expected_label(regs: EsRegisters, i: int) -> GhzOutcome:
    ops = [PauliOp.I] + [PauliOp.IY if b else PauliOp.I for b in regs.scrambles[i]] + [PauliOp.I]
    return GhzOutcome(regs.r + 1, "+", "0" * (regs.r + 1)).apply_paulis(ops)


def auth_check_es(regs: EsRegisters, config: EsSessionConfig, rng: np.random.Generator,
                  attack: AttackModel | None = None,
                  transcript: Transcript | None = None) -> CheckResult:
    """Trent folds his private scramble into the label he expects."""
    attack = attack or AttackModel.none()
    result = sampled_check(
        regs.states, lambda pos: expected_label(regs, pos), regs.r + 1,
        config.sample_fraction, config.abort_threshold, rng,
        transcript if transcript is not None else Transcript(),
        key_bits=lambda pos: (regs.key_bits[pos],),
        impostor_states=regs.eve_copies if attack.impersonates else None,
    )
    regs.eve_copies = {i: s for i, s in regs.eve_copies.items() if i in regs.states}
    return result


def descramble_es(regs: EsRegisters, transcript: Transcript | None = None) -> EsRegisters:
    """Trent reveals his I/iY choices; each scrambled user repeats them."""
    if transcript is not None:
        transcript.announce("reveal", "Trent", scrambles={
            i: "".join(map(str, regs.scrambles[i])) for i in sorted(regs.states)})
    for i, s in regs.states.items():
        for j, b in enumerate(regs.scrambles[i], start=1):
            if b:
                s = apply_gate(s, Gate.IY, j)
        regs.states[i] = s
    return regs


@dataclass
class EsGroup:
    index: int
    p_state_index: int
    q_state_index: int
    state: StateVector
    width: int


def encode_and_mask_es(regs: EsRegisters, secret_bits: str, rng: np.random.Generator,
                       transcript: Transcript | None = None):
    """Trent's Pauli on P(g)'s T; Alice_1..Alice_{r-1} each mask P(g)'s A_j with I/X."""
    remaining = sorted(regs.states)
    n_groups = len(remaining) // 2
    needed = len(secret_bits) // 2
    if needed > n_groups:
        raise ConfigError(f"secret needs {needed} groups, only {n_groups} remain")
    groups, masks = [], {}
    for g in range(needed):
        p_idx, q_idx = remaining[2 * g], remaining[2 * g + 1]
        op = PauliOp.from_code(secret_bits[2 * g:2 * g + 2])
        p = apply_gate(regs.states[p_idx], op.gate, 0)
        m = tuple(random_bits(rng, regs.r - 1))
        for j, b in enumerate(m, start=1):
            if b:
                p = apply_gate(p, Gate.X, j)
        masks[g] = m
        q = regs.states[q_idx]
        if p.n_qubits + q.n_qubits > MAX_QUBITS:
            raise SizeError(f"group of {p.n_qubits}+{q.n_qubits} qubits is too large")
        groups.append(EsGroup(g, p_idx, q_idx, tensor(p, q), p.n_qubits))
        if transcript is not None:
            transcript.record("encode", "Trent", OPERATION, group=g, op=op.name)
            for j, b in enumerate(m, start=1):
                transcript.record("encode", f"Alice_{j}", OPERATION, group=g, mask=b)
    return groups, masks


@dataclass
class SwapAnnouncements:
    trent: dict[int, BellOutcome]
    users: dict[int, dict[int, BellOutcome]]   # user -> group -> announced label
    originals: dict[int, dict[int, BellOutcome]]  # private, user -> group -> raw label


def gk_pauli(gk: str, n_states: int, g: int) -> PauliOp:
    return PauliOp.from_code(gk[n_states + 2 * g:n_states + 2 * g + 2])


def swap_round_es(groups: list[EsGroup], r: int, announce_key: dict[int, str], n_states: int,
                  rng: np.random.Generator, transcript: Transcript | None = None
                  ) -> SwapAnnouncements:
    """
    Users Bell-measure (A_j, A_j'); Alice_r announces her label relabelled by
    the GK-selected Pauli; Trent Bell-measures (T, T').
    ``announce_key`` is Alice_r's copy of GK (differs from GK for an impostor).
    """
    trent, users = {}, {j: {} for j in range(1, r + 1)}
    originals = {j: {} for j in range(1, r + 1)}
    for grp in groups:
        pairs = group_pairs(r, grp.width)
        s = grp.state
        for j in range(1, r + 1):
            label, s = measure_bell(s, *pairs[j], rng)
            originals[j][grp.index] = label
            if j == r:
                label = bell_relabel(label, gk_pauli(announce_key[r], n_states, grp.index))
            users[j][grp.index] = label
        trent[grp.index], s = measure_bell(s, *pairs[0], rng)
        grp.state = s
    if transcript is not None:
        for j in range(1, r + 1):
            transcript.announce("swap", f"Alice_{j}",
                                results={g: b.value for g, b in users[j].items()})
        transcript.announce("swap", "Trent", results={g: b.value for g, b in trent.items()})
    return SwapAnnouncements(trent, users, originals)


def decode_es(table: SwapDecodeTable, ann: SwapAnnouncements, gk: str, n_states: int,
              masks: dict[int, tuple[int, ...]] | None = None,
              own: tuple[int, dict[int, BellOutcome]] | None = None) -> str:
    """
    Recover Trent's bits from the public announcements and GK. Alice_r passes
    ``own=(r, originals)`` to use her unrelabelled results directly. Published
    masks, when given, must agree with the looked-up ones.
    """
    r = table.r
    bits = []
    for g in sorted(ann.trent):
        if own is not None and own[0] == r:
            last = own[1][g]
        else:
            last = bell_unlabel(ann.users[r][g], gk_pauli(gk, n_states, g))
        outcome = (ann.trent[g],) + tuple(ann.users[j][g] for j in range(1, r)) + (last,)
        op, m = table.lookup(outcome)
        if masks is not None and tuple(masks[g]) != tuple(m):
            raise IntegrityError(f"group {g}: published masks {masks[g]} contradict outcome {m}")
        bits.append(op.code)
    return "".join(bits)


# ---------------------------------------------------------------------------
# Whole session
# ---------------------------------------------------------------------------

def _user_keys(config: EsSessionConfig, gk: str, rng: np.random.Generator) -> dict[int, str]:
    keys = {}
    for j in range(1, config.r + 1):
        if j in config.impostors:
            keys[j] = "".join(map(str, random_bits(rng, len(gk))))
        else:
            keys[j] = gk
    return keys


def run_es_session(config: EsSessionConfig, gk: AuthKey | str | None = None,
                   attack: AttackModel | None = None,
                   rng: np.random.Generator | None = None,
                   registry: KeyRegistry | None = None) -> SessionReport:
    attack = attack or AttackModel.none()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    tr = Transcript()
    if gk is None:
        registry = registry or KeyRegistry.generate(config.r, rng)
        start = registry["group"].counter
        gk = registry.stretch("group", config.gk_len)
        tr.announce("prepare", "Trent", group_counter=[start, gk.end_counter])
    gk_bits = gk.bits if isinstance(gk, AuthKey) else gk
    if len(gk_bits) < config.gk_len:
        raise ConfigError(f"group key has {len(gk_bits)} bits, need {config.gk_len}")
    user_keys = _user_keys(config, gk_bits, rng)

    report = SessionReport("es", config.r, config.n_states, attack.describe(), False, 0.0,
                           None, config.secret_bits, transcript=tr)
    regs = prepare_es(config, gk_bits, rng, tr)
    transmit(regs, attack, rng, tr)
    user_unkey_es(regs, user_keys, tr)
    check = auth_check_es(regs, config, rng, attack, tr)
    report.samples = check.samples
    report.mismatch_rate = check.mismatch_rate
    if not check.passed:
        report.aborted_at = "check"
        return report
    report.passed = True

    descramble_es(regs, tr)
    groups, masks = encode_and_mask_es(regs, config.secret_bits, rng, tr)
    ann = swap_round_es(groups, config.r, user_keys, config.n_states, rng, tr)
    published = None
    if config.publish_masks:
        published = masks
        for j in range(1, config.r):
            tr.announce("decode", f"Alice_{j}", masks={g: m[j - 1] for g, m in masks.items()})

    table = build_swap_table(config.r)
    for j in range(1, config.r + 1):
        try:
            own = (j, ann.originals[j]) if j == config.r else None
            report.decoded[f"Alice_{j}"] = decode_es(table, ann, user_keys[j], config.n_states,
                                                     published, own)
        except IntegrityError as exc:
            report.decoded[f"Alice_{j}"] = ""
            tr.record("decode", f"Alice_{j}", MEASUREMENT, integrity_error=str(exc))
    report.decode_ok = all(v == config.secret_bits for v in report.decoded.values())
    tr.record("decode", "all", MEASUREMENT, decoded=dict(report.decoded), ok=report.decode_ok)
    return report


# ---------------------------------------------------------------------------
# Simultaneous authentication variant
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _auth_support(r: int, ops: tuple[int, ...]) -> dict[int, frozenset]:
    """For iY choices ``ops`` on (t, 1..r) of P, the possible (trent, user_j) label pairs."""
    p = ghz_plus(r + 1)
    for q, b in enumerate(ops):
        if b:
            p = apply_gate(p, Gate.IY, q)
    state = tensor(p, ghz_plus(r + 1))
    pairs = group_pairs(r)
    dist = joint_distribution(state, pairs, ["bell"] * len(pairs))
    support = {j: set() for j in range(1, r + 1)}
    for outcome, prob in dist.items():
        if prob > 1e-12:
            for j in range(1, r + 1):
                support[j].add((outcome[0], outcome[j]))
    return {j: frozenset(s) for j, s in support.items()}


@dataclass
class AuthVerdict:
    passed: bool
    mismatch_rate: float
    groups: int


def simultaneous_auth(r: int, keys: list[str], n_states: int, rng: np.random.Generator,
                      user_keys: list[str] | None = None, abort_threshold: float = 0.0,
                      transcript: Transcript | None = None) -> dict[int, AuthVerdict]:
    """
    Trent authenticates r users at once. ``keys`` are the keys Trent holds;
    ``user_keys`` are what the users actually apply (defaults to ``keys``).
    Key bit g of user j selects I/iY on user j's particle of P(g).
    """
    if r < 1:
        raise ConfigError("need at least one user")
    if 2 * (r + 1) > MAX_QUBITS:
        raise ConfigError(f"r={r} needs {2 * (r + 1)} qubits per group")
    user_keys = user_keys or keys
    n_groups = n_states // 2
    for k in list(keys) + list(user_keys):
        if len(k) < n_groups:
            raise ConfigError(f"keys need {n_groups} bits")
    tr = transcript if transcript is not None else Transcript()
    pairs = group_pairs(r)
    errors = {j: 0 for j in range(1, r + 1)}
    for g in range(n_groups):
        t_op = int(rng.integers(0, 2))
        p = ghz_plus(r + 1)
        if t_op:
            p = apply_gate(p, Gate.IY, 0)
        for j in range(1, r + 1):
            if user_keys[j - 1][g] == "1":
                p = apply_gate(p, Gate.IY, j)
        s = tensor(p, ghz_plus(r + 1))
        results = {}
        for j in range(1, r + 1):
            results[j], s = measure_bell(s, *pairs[j], rng)
        trent, s = measure_bell(s, *pairs[0], rng)
        tr.announce("auth", "users", group=g, results={j: b.value for j, b in results.items()})
        claimed = (t_op,) + tuple(int(keys[j - 1][g]) for j in range(1, r + 1))
        support = _auth_support(r, claimed)
        for j in range(1, r + 1):
            if (trent, results[j]) not in support[j]:
                errors[j] += 1
    out = {}
    for j in range(1, r + 1):
        rate = mismatch_rate(errors[j], n_groups)
        out[j] = AuthVerdict(rate <= abort_threshold, rate, n_groups)
    tr.announce("auth", "Trent", verdicts={j: v.passed for j, v in out.items()})
    return out


def auth_mismatch_probability(r: int, true_ops: tuple[int, ...], claimed_ops: tuple[int, ...],
                              user: int) -> float:
    """Exact probability that ``user``'s pair falls outside the claimed-key support."""
    p = ghz_plus(r + 1)
    for q, b in enumerate(true_ops):
        if b:
            p = apply_gate(p, Gate.IY, q)
    state = tensor(p, ghz_plus(r + 1))
    pairs = group_pairs(r)
    dist = joint_distribution(state, pairs, ["bell"] * len(pairs))
    support = _auth_support(r, claimed_ops)[user]
    return sum(prob for o, prob in dist.items() if (o[0], o[user]) not in support)
