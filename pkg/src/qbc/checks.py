"""
Correlation rules for the authentication / eavesdropping checks.

Every check state is, for honest parties, a GHZ basis state over
(T, A_1, ..., A_r) whose label Trent knows. Z results must reproduce the
label's pattern or its complement; X results must have sign product equal to
the label's sign.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qsim import (
    Gate,
    GhzOutcome,
    PauliOp,
    StateVector,
    apply_gates,
    ghz_plus,
    measure,
)

_TO_BITS = str.maketrans("+-", "01")
_FLIP = str.maketrans("01", "10")


def correlation_ok(expected: GhzOutcome, basis: str, outcome: str) -> bool:
    """``outcome`` lists Trent's result first, then each user's."""
    if len(outcome) != expected.n:
        raise ValueError(f"expected {expected.n} results, got {len(outcome)}")
    if basis == "Z":
        return outcome in (expected.pattern, expected.pattern.translate(_FLIP))
    if basis == "X":
        minus = outcome.translate(_TO_BITS).count("1")
        return (minus % 2 == 0) == (expected.sign == "+")
    raise ValueError(f"check basis must be 'Z' or 'X', got {basis!r}")


def mismatch_rate(errors: int, samples: int) -> float:
    return errors / samples if samples else 0.0


def keyed_h(state: StateVector, key_bits: Sequence[int], first_user: int = 1) -> StateVector:
    """H on user qubit ``first_user + j`` wherever key_bits[j] == 1."""
    return apply_gates(
        state, [(Gate.H, first_user + j) for j, b in enumerate(key_bits) if b]
    )


def measure_check(state: StateVector, n_parties: int, basis: str, rng: np.random.Generator):
    """Trent measures T, then each user measures their qubit, all in ``basis``."""
    trent, state = measure(state, [0], basis, rng)
    users, state = measure(state, list(range(1, n_parties)), basis, rng)
    return trent + users, state


@dataclass(frozen=True)
class CheckScenario:
    """
    One check position as it travels: the state on the wire, the keyed-H bits
    each user undoes on receipt, and the label Trent expects afterwards.
    """

    name: str
    transit: StateVector
    key_bits: tuple[int, ...]
    expected: GhzOutcome

    @property
    def n_parties(self) -> int:
        return self.expected.n

    @property
    def transit_qubits(self) -> list[int]:
        return list(range(1, self.n_parties))

    def unkey(self, state: StateVector) -> StateVector:
        return keyed_h(state, self.key_bits)


def es_scenario(key_bit: int, scrambles: Sequence[int], name: str = "") -> CheckScenario:
    """
    Entanglement-swapping check state: GHZ+ with keyed H on every user qubit
    and a private iY on each scrambled user (scrambles[j] for user j+1).
    """
    r = len(scrambles) + 1
    start = ghz_plus(r + 1)
    keyed = keyed_h(start, [key_bit] * r)
    ops = [PauliOp.I] + [PauliOp.IY if s else PauliOp.I for s in scrambles] + [PauliOp.I]
    state = apply_gates(keyed, [(op.gate, q) for q, op in enumerate(ops) if op is not PauliOp.I])
    expected = GhzOutcome(r + 1, "+", "0" * (r + 1)).apply_paulis(ops)
    return CheckScenario(name or f"es(k={key_bit},s={''.join(map(str, scrambles))})",
                         state, (key_bit,) * r, expected)


def dc_scenario(initial: GhzOutcome, key_bits: Sequence[int], name: str = "") -> CheckScenario:
    """Dense-coding check state: ``initial`` with per-user keyed H."""
    if len(key_bits) != initial.n - 1:
        raise ValueError("one key bit per user")
    state = keyed_h(initial.state, key_bits)
    return CheckScenario(name or f"dc({initial},k={''.join(map(str, key_bits))})",
                         state, tuple(key_bits), initial)


# Security-analysis families for three parties.
_PHI = {
    "Phi1": (0, 0),  # (key bit, scramble on A_1)
    "Phi2": (1, 0),
    "Phi3": (0, 1),
    "Phi4": (1, 1),
}
_OMEGA = {
    "Omega1": (0, 0),
    "Omega2": (1, 0),
    "Omega3": (0, 1),
    "Omega4": (1, 1),
}


def scenario(name: str, initial: GhzOutcome | None = None) -> CheckScenario:
    """Named three-party families Phi1..Phi4 and Omega1..Omega4 (initial Psi1 by default)."""
    if name in _PHI:
        k, s = _PHI[name]
        return es_scenario(k, [s], name)
    if name in _OMEGA:
        return dc_scenario(initial or GhzOutcome.psi(1), _OMEGA[name], name)
    raise ValueError(f"unknown state family {name!r}")


def omega_states(initial: GhzOutcome) -> dict[str, StateVector]:
    return {name: scenario(name, initial).transit for name in _OMEGA}


__all__ = [
    "CheckScenario",
    "correlation_ok",
    "dc_scenario",
    "es_scenario",
    "keyed_h",
    "measure_check",
    "mismatch_rate",
    "omega_states",
    "scenario",
]
