"""Shared session plumbing: reports, sampling, seeds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .checks import correlation_ok, measure_check, mismatch_rate
from .qsim import GhzOutcome, StateVector
from .transcript import MEASUREMENT, Transcript

SUMMARY_FIELDS = (
    "session", "scheme", "r", "n_states", "attack", "samples", "mismatch_rate",
    "pass", "decode_ok",
)


@dataclass
class SampleRecord:
    position: int
    basis: str
    error: bool
    stage: str = "auth"
    key_bits: tuple[int, ...] = ()


@dataclass
class SessionReport:
    scheme: str
    r: int
    n_states: int
    attack: str
    passed: bool
    mismatch_rate: float
    decode_ok: bool | None
    secret: str
    decoded: dict[str, str] = field(default_factory=dict)
    samples: list[SampleRecord] = field(default_factory=list)
    transcript: Transcript = field(default_factory=Transcript)
    aborted_at: str | None = None

    @property
    def aborted(self) -> bool:
        return not self.passed

    def summary_row(self, session: int = 0) -> dict:
        return {
            "session": session,
            "scheme": self.scheme,
            "r": self.r,
            "n_states": self.n_states,
            "attack": self.attack,
            "samples": len(self.samples),
            "mismatch_rate": f"{self.mismatch_rate:.6f}",
            "pass": int(self.passed),
            "decode_ok": "" if self.decode_ok is None else int(self.decode_ok),
        }


def session_rng(root_seed: int, index: int) -> np.random.Generator:
    """Independent stream per session: SeedSequence(root_seed, spawn_key=(index,))."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(index,)))


def choose_samples(rng: np.random.Generator, candidates: Sequence[int], fraction: float) -> list[int]:
    if not candidates:
        return []
    k = min(len(candidates), math.ceil(fraction * len(candidates)))
    picked = rng.choice(len(candidates), size=k, replace=False)
    return sorted(candidates[i] for i in picked)


def random_bits(rng: np.random.Generator, n: int) -> list[int]:
    return [int(b) for b in rng.integers(0, 2, n)]


def check_bitstring(bits: str, what: str) -> None:
    if set(bits) - {"0", "1"}:
        raise ValueError(f"{what} must be a bitstring, got {bits!r}")


def hex_to_bits(text: str) -> str:
    """'0xA5' -> '10100101'; plain bitstrings pass through."""
    t = text.strip()
    if t.lower().startswith("0x"):
        digits = t[2:]
        return "".join(format(int(c, 16), "04b") for c in digits)
    check_bitstring(t, "payload")
    return t


def bits_to_hex(bits: str) -> str:
    if len(bits) % 4:
        return bits
    return "0x" + "".join(format(int(bits[i:i + 4], 2), "X") for i in range(0, len(bits), 4))


@dataclass
class CheckResult:
    passed: bool
    mismatch_rate: float
    samples: list[SampleRecord]


def sampled_check(states: dict[int, StateVector], expected: Callable[[int], GhzOutcome],
                  n_parties: int, fraction: float, threshold: float,
                  rng: np.random.Generator, transcript: Transcript,
                  key_bits: Callable[[int], tuple[int, ...]] = lambda pos: (),
                  impostor_states: dict[int, StateVector] | None = None) -> CheckResult:
    """
    Sample positions, pick Z/X per position, let every party measure and
    publish, compare against the label Trent expects. Sampled positions are
    removed from ``states``. With ``impostor_states`` the users' results are
    published by Eve from her own copies.
    """
    positions = choose_samples(rng, sorted(states), fraction)
    bases = ["Z" if b == 0 else "X" for b in random_bits(rng, len(positions))]
    transcript.announce("check", "Trent", positions=positions, bases="".join(bases))
    samples, published = [], {}
    for pos, basis in zip(positions, bases):
        src = states[pos] if impostor_states is None else impostor_states[pos]
        outcome, _ = measure_check(src, n_parties, basis, rng)
        published[pos] = outcome[1:]
        transcript.record("check", "Trent", MEASUREMENT, position=pos, basis=basis,
                          result=outcome[0])
        error = not correlation_ok(expected(pos), basis, outcome)
        samples.append(SampleRecord(pos, basis, error, "auth", key_bits(pos)))
    for j in range(1, n_parties):
        transcript.announce("check", f"Alice_{j}" if impostor_states is None else "Eve",
                            as_user=f"Alice_{j}",
                            results={p: o[j - 1] for p, o in published.items()})
    for pos in positions:
        del states[pos]
        if impostor_states is not None:
            impostor_states.pop(pos, None)
    rate = mismatch_rate(sum(s.error for s in samples), len(samples))
    passed = rate <= threshold
    transcript.announce("check", "Trent", mismatch_rate=rate, passed=passed)
    return CheckResult(passed, rate, samples)
