"""
Broadcast by dense coding.

Trent prepares each (r+1)-qubit state in a uniformly random GHZ label and
sends A_j to Alice_j under her own keyed H layer. After the check, every user
applies a private I/iY, sends the qubit back, and Trent encodes two bits per
state with a Pauli on T before reading the state out in the GHZ basis. Each
user then solves for Trent's Pauli from (initial, final, own op).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import AttackModel, apply_attack
from .checks import keyed_h, mismatch_rate
from .errors import ConfigError, IntegrityError
from .keys import AuthKey, KeyRegistry
from .qsim import MAX_QUBITS, GhzOutcome, PauliOp, StateVector, apply_gate, measure_ghz
from .session import (
    CheckResult,
    SampleRecord,
    SessionReport,
    check_bitstring,
    choose_samples,
    random_bits,
    sampled_check,
)
from .transcript import MEASUREMENT, OPERATION, Transcript

USER_OPS = (PauliOp.I, PauliOp.IY)


@dataclass
class DcSessionConfig:
    r: int = 2
    n_states: int = 16
    sample_fraction_auth: float = 0.25
    sample_fraction_return: float = 0.25
    abort_threshold: float = 0.0
    secret_bits: str = "01"
    seed: int | None = 0
    impostors: tuple[int, ...] = ()

    def __post_init__(self):
        check_bitstring(self.secret_bits, "secret_bits")
        if self.r < 1:
            raise ConfigError("dense-coding broadcast needs at least one user")
        if self.r + 1 > MAX_QUBITS:
            raise ConfigError(f"r={self.r} exceeds the {MAX_QUBITS}-qubit register")
        for f in (self.sample_fraction_auth, self.sample_fraction_return):
            if not 0 < f < 1:
                raise ConfigError("sample fractions must lie in (0, 1)")
        if len(self.secret_bits) % 2:
            raise ConfigError("secret_bits must have even length")
        if len(self.secret_bits) // 2 > self.n_payload:
            raise ConfigError(
                f"{len(self.secret_bits)} secret bits need {len(self.secret_bits) // 2} "
                f"states; {self.n_states} states leave only {self.n_payload} after sampling"
            )
        for j in self.impostors:
            if not 1 <= j <= self.r:
                raise ConfigError(f"impostor index {j} is not a user")

    @property
    def n_after_auth(self) -> int:
        return self.n_states - math.ceil(self.sample_fraction_auth * self.n_states)

    @property
    def n_payload(self) -> int:
        k = self.n_after_auth
        return k - math.ceil(self.sample_fraction_return * k)


@dataclass
class DcStateRecord:
    initial: GhzOutcome
    user_ops: tuple[PauliOp, ...] = ()
    trent_op: PauliOp = PauliOp.I
    final: GhzOutcome | None = None


@dataclass
class DcRegisters:
    r: int
    states: dict[int, StateVector]
    records: dict[int, DcStateRecord]
    key_bits: dict[int, tuple[int, ...]]
    eve_copies: dict[int, StateVector] = field(default_factory=dict)


def final_label(initial: GhzOutcome, trent_op: PauliOp, user_ops) -> GhzOutcome:
    return initial.apply_paulis([trent_op, *user_ops])


def prepare_dc(config: DcSessionConfig, keys: dict[int, str], rng: np.random.Generator,
               transcript: Transcript | None = None) -> DcRegisters:
    for j in range(1, config.r + 1):
        if len(keys[j]) < config.n_states:
            raise ConfigError(f"key of Alice_{j} has {len(keys[j])} bits, need {config.n_states}")
    labels = GhzOutcome.all(config.r + 1)
    states, records, key_bits = {}, {}, {}
    for i in range(config.n_states):
        initial = labels[int(rng.integers(0, len(labels)))]
        bits = tuple(int(keys[j][i]) for j in range(1, config.r + 1))
        states[i] = keyed_h(initial.state, bits)
        records[i] = DcStateRecord(initial)
        key_bits[i] = bits
    if transcript is not None:
        transcript.record("prepare", "Trent", OPERATION,
                          initial={i: str(rec.initial) for i, rec in records.items()})
    return DcRegisters(config.r, states, records, key_bits)


def _transit(regs: DcRegisters, attack: AttackModel, stage: str, rng: np.random.Generator,
             transcript: Transcript | None) -> None:
    if attack.kind == "none" or attack.stage != stage:
        return
    transit = list(range(1, regs.r + 1))
    eve_log = {}
    for i, s in regs.states.items():
        s2, rec = apply_attack(s, transit, attack, rng)
        regs.states[i] = s2
        regs.eve_copies[i] = s2
        if rec.outcomes:
            eve_log[i] = [str(getattr(o, "value", o)) for o in rec.outcomes]
    if transcript is not None:
        transcript.record(stage, "Eve", MEASUREMENT, attack=attack.describe(), outcomes=eve_log)


def user_unkey_dc(regs: DcRegisters, user_keys: dict[int, str]) -> DcRegisters:
    for i, s in regs.states.items():
        bits = [int(user_keys[j][i]) for j in range(1, regs.r + 1)]
        regs.states[i] = keyed_h(s, bits)
    return regs


def auth_check_dc(regs: DcRegisters, config: DcSessionConfig, rng: np.random.Generator,
                  attack: AttackModel | None = None,
                  transcript: Transcript | None = None) -> CheckResult:
    """Correlations are judged against each sample's initial GHZ label."""
    attack = attack or AttackModel.none()
    result = sampled_check(
        regs.states, lambda pos: regs.records[pos].initial, regs.r + 1,
        config.sample_fraction_auth, config.abort_threshold, rng,
        transcript if transcript is not None else Transcript(),
        key_bits=lambda pos: regs.key_bits[pos],
        impostor_states=regs.eve_copies if attack.impersonates else None,
    )
    regs.eve_copies = {i: s for i, s in regs.eve_copies.items() if i in regs.states}
    return result


def user_code_and_return(regs: DcRegisters, rng: np.random.Generator,
                         transcript: Transcript | None = None) -> DcRegisters:
    """Every user applies a private uniformly random I/iY to each qubit."""
    for i, s in regs.states.items():
        ops = tuple(USER_OPS[b] for b in random_bits(rng, regs.r))
        for j, op in enumerate(ops, start=1):
            if op is not PauliOp.I:
                s = apply_gate(s, op.gate, j)
        regs.states[i] = s
        regs.records[i].user_ops = ops
    if transcript is not None:
        for j in range(1, regs.r + 1):
            transcript.record("code", f"Alice_{j}", OPERATION,
                              ops={i: regs.records[i].user_ops[j - 1].name for i in regs.states})
    return regs


@dataclass
class DcAnnouncements:
    initial: dict[int, GhzOutcome]
    final: dict[int, GhzOutcome]
    positions: list[int]   # secret-bearing positions, in order


def encode_measure_dc(regs: DcRegisters, secret_bits: str, config: DcSessionConfig,
                      rng: np.random.Generator,
                      transcript: Transcript | None = None
                      ) -> tuple[CheckResult, DcAnnouncements | None]:
    """
    Return-trip check and secret encoding. Samples get a random Pauli, the
    first len(secret)/2 other positions carry the secret. Labels are revealed
    only once the return-trip check passes.
    """
    tr = transcript if transcript is not None else Transcript()
    remaining = sorted(regs.states)
    samples = choose_samples(rng, remaining, config.sample_fraction_return)
    rest = [i for i in remaining if i not in set(samples)]
    needed = len(secret_bits) // 2
    if needed > len(rest):
        raise ConfigError(f"secret needs {needed} states, only {len(rest)} remain")
    payload = rest[:needed]
    for pos in samples:
        regs.records[pos].trent_op = list(PauliOp)[int(rng.integers(0, 4))]
    for g, pos in enumerate(payload):
        regs.records[pos].trent_op = PauliOp.from_code(secret_bits[2 * g:2 * g + 2])
    for pos in samples + payload:
        rec = regs.records[pos]
        s = regs.states[pos]
        if rec.trent_op is not PauliOp.I:
            s = apply_gate(s, rec.trent_op.gate, 0)
        label, _ = measure_ghz(s, list(range(regs.r + 1)), rng)
        rec.final = label
        tr.record("encode", "Trent", MEASUREMENT, position=pos, op=rec.trent_op.name,
                  result=str(label))

    tr.announce("return-check", "Trent", positions=samples,
                ops={p: regs.records[p].trent_op.name for p in samples})
    for j in range(1, regs.r + 1):
        tr.announce("return-check", f"Alice_{j}",
                    ops={p: regs.records[p].user_ops[j - 1].name for p in samples})
    checks = []
    for pos in samples:
        rec = regs.records[pos]
        expected = final_label(rec.initial, rec.trent_op, rec.user_ops)
        checks.append(SampleRecord(pos, "ghz", expected != rec.final, "return"))
    rate = mismatch_rate(sum(c.error for c in checks), len(checks))
    passed = rate <= config.abort_threshold
    tr.announce("return-check", "Trent", mismatch_rate=rate, passed=passed)
    result = CheckResult(passed, rate, checks)
    if not passed:
        return result, None
    ann = DcAnnouncements(
        {p: regs.records[p].initial for p in payload},
        {p: regs.records[p].final for p in payload},
        payload,
    )
    tr.announce("reveal", "Trent", positions=payload,
                initial={p: str(l) for p, l in ann.initial.items()},
                final={p: str(l) for p, l in ann.final.items()})
    return result, ann


def solve_trent_op(initial: GhzOutcome, final: GhzOutcome, own_op: PauliOp,
                   own_position: int) -> PauliOp:
    """
    The flip vector initial -> final is fixed up to complement; the user's own
    op (I or iY, a pure bit flip on its qubit) fixes the representative. Then
    Trent's bit flip is f_0 and his phase flip absorbs the iY phases of the
    other users: z_T = sign change xor parity(f_1..f_r).
    """
    if initial.n != final.n:
        raise IntegrityError(f"labels of different size: {initial.n} vs {final.n}")
    if own_op not in USER_OPS:
        raise IntegrityError(f"{own_op.name} is not a legal user operation")
    if not 1 <= own_position < initial.n:
        raise IntegrityError(f"position {own_position} is not a user qubit")
    f = [int(a) ^ int(b) for a, b in zip(initial.pattern, final.pattern)]
    if f[own_position] != int(own_op is PauliOp.IY):
        f = [1 - b for b in f]
    sign_change = int(initial.sign != final.sign)
    z = sign_change ^ (sum(f[1:]) % 2)
    op = PauliOp.from_flips(bool(f[0]), bool(z))
    others = [USER_OPS[b] for b in f[1:]]
    if final_label(initial, op, others) != final:
        raise IntegrityError(f"no Pauli maps {initial} to {final} with own op {own_op.name}")
    return op


def decode_dc(ann: DcAnnouncements, own_ops: dict[int, PauliOp], own_position: int) -> str:
    """``own_ops`` maps state position -> this user's I/iY choice."""
    return "".join(
        solve_trent_op(ann.initial[p], ann.final[p], own_ops[p], own_position).code
        for p in ann.positions
    )


def run_dc_session(config: DcSessionConfig, keys: dict[int, AuthKey | str] | None = None,
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
            keys[j] = registry.stretch(f"Alice_{j}", config.n_states)
            tr.announce("prepare", "Trent", party=f"Alice_{j}",
                        counter=[start, keys[j].end_counter])
    key_bits = {j: (k.bits if isinstance(k, AuthKey) else k) for j, k in keys.items()}
    user_keys = {
        j: "".join(map(str, random_bits(rng, config.n_states))) if j in config.impostors else k
        for j, k in key_bits.items()
    }

    report = SessionReport("dc", config.r, config.n_states, attack.describe(), False, 0.0,
                           None, config.secret_bits, transcript=tr)
    regs = prepare_dc(config, key_bits, rng, tr)
    _transit(regs, attack, "forward", rng, tr)
    user_unkey_dc(regs, user_keys)
    auth = auth_check_dc(regs, config, rng, attack, tr)
    report.samples = list(auth.samples)
    report.mismatch_rate = auth.mismatch_rate
    if not auth.passed:
        report.aborted_at = "check"
        return report

    user_code_and_return(regs, rng, tr)
    _transit(regs, attack, "return", rng, tr)
    ret, ann = encode_measure_dc(regs, config.secret_bits, config, rng, tr)
    report.samples += ret.samples
    report.mismatch_rate = mismatch_rate(sum(s.error for s in report.samples), len(report.samples))
    if ann is None:
        report.aborted_at = "return-check"
        return report
    report.passed = True
    for j in range(1, config.r + 1):
        own = {p: regs.records[p].user_ops[j - 1] for p in ann.positions}
        try:
            report.decoded[f"Alice_{j}"] = decode_dc(ann, own, j)
        except IntegrityError as exc:
            report.decoded[f"Alice_{j}"] = ""
            tr.record("decode", f"Alice_{j}", MEASUREMENT, integrity_error=str(exc))
    report.decode_ok = all(v == config.secret_bits for v in report.decoded.values())
    tr.record("decode", "all", MEASUREMENT, decoded=dict(report.decoded), ok=report.decode_ok)
    return report


def tamper_detection_probability(op: PauliOp, target: int, r: int = 2) -> float:
    """
    Exact per-sample probability that a fixed Pauli on returned qubit A_target
    changes the GHZ label Trent reads out, averaged over initial labels, Trent's
    random sample op and user ops.
    """
    total, count = 0, 0
    for initial in GhzOutcome.all(r + 1):
        for t in PauliOp:
            for bits in range(2 ** r):
                ops = [USER_OPS[(bits >> (r - 1 - k)) & 1] for k in range(r)]
                honest = final_label(initial, t, ops)
                tampered = [PauliOp.I] * (r + 1)
                tampered[target] = op
                got = honest.apply_paulis(tampered)
                total += got != honest
                count += 1
    return total / count
