"""Built-in exact-enumeration verification suites."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .adversary import AttackModel, exact_error_rate
from .checks import scenario
from .errors import IntegrityError
from .qsim import (
    BellOutcome,
    Gate,
    GhzOutcome,
    PauliOp,
    apply_gate,
    ghz_plus,
    joint_distribution,
    states_equal_up_to_phase,
    tensor,
)
from .scheme_dc import USER_OPS, final_label, solve_trent_op
from .scheme_es import build_swap_table, group_pairs, swap_distribution
from .scheme_qe import carrier_marginals, decrypt_distribution, encrypt_payload, finish_round

SUITES = ("swap-table", "error-rates", "dense-coding", "qe-roundtrip")

_B = {b.value: b for b in BellOutcome}


def _triples(*rows: str) -> frozenset:
    return frozenset(tuple(_B[x] for x in row.split()) for row in rows)


# Nonzero (Trent, Alice_1, Alice_2) Bell triples of Psi1 (x) Psi1.
IDENTITY_TRIPLES = _triples(
    "phi+ phi+ phi+", "phi+ phi- phi-", "phi- phi+ phi-", "phi- phi- phi+",
    "psi+ psi+ psi+", "psi+ psi- psi-", "psi- psi+ psi-", "psi- psi- psi+",
)
# The same after sx on T and on A_1 (the state Psi7 (x) Psi1).
X_X_TRIPLES = _triples(
    "psi+ psi+ phi+", "psi+ psi- phi-", "psi- psi+ phi-", "psi- psi- phi+",
    "phi+ phi+ psi+", "phi+ phi- psi-", "phi- phi+ psi-", "phi- phi- psi+",
)

# (family, intercept basis, check basis) -> published rate
PUBLISHED_RATES = {
    ("Phi2", "Z", "Z"): 0.75,
    ("Phi4", "Z", "Z"): 0.75,
    ("Phi1", "X", "X"): 0.5,
    ("Phi3", "X", "X"): 0.5,
    ("Phi1", "Z", "Z"): 0.0,
    ("Phi3", "Z", "Z"): 0.0,
    ("Phi2", "X", "X"): 0.0,
    ("Phi4", "X", "X"): 0.0,
}


@dataclass
class SuiteResult:
    name: str
    lines: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def report(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = [f"== {self.name}: {status}", *self.lines]
        out += [f"!! {f}" for f in self.failures]
        return "\n".join(out)


def _fmt(triple) -> str:
    return " ".join(f"{b.value:4}" for b in triple)


def _support_check(res: SuiteResult, title: str, dist: dict, expected: frozenset,
                   tol: float = 1e-12) -> None:
    res.lines.append(f"{title}: {sum(p > tol for p in dist.values())} nonzero of {len(dist)}")
    for triple, p in sorted(dist.items(), key=lambda kv: [b.value for b in kv[0]]):
        want = 1 / 8 if triple in expected else 0.0
        if p > tol or want:
            res.lines.append(f"  {_fmt(triple)}  expected {want:.6f}  computed {p:.6f}")
        if abs(p - want) > tol:
            res.failures.append(f"{title}: {_fmt(triple)} expected {want}, got {p}")


def swap_table_suite() -> SuiteResult:
    res = SuiteResult("swap-table")
    _support_check(res, "identity", swap_distribution(2, PauliOp.I, (0,)), IDENTITY_TRIPLES)
    _support_check(res, "sx on T and A_1", swap_distribution(2, PauliOp.X, (1,)), X_X_TRIPLES)
    try:
        table = build_swap_table(2)
    except IntegrityError as exc:
        res.failures.append(str(exc))
        return res
    res.lines.append(f"decode table: {len(table)} entries, single-valued")
    if len(table) != 64:
        res.failures.append(f"decode table has {len(table)} entries, expected 64")
    for triple, want in [
        (("psi-", "psi-", "phi+"), (PauliOp.X, (1,))),
        (("phi+", "phi+", "phi+"), (PauliOp.I, (0,))),
    ]:
        key = tuple(_B[x] for x in triple)
        got = table.entries.get(key)
        res.lines.append(f"  {' '.join(triple)} -> {got[0].name if got else None}, mask {got[1] if got else None}")
        if got != want:
            res.failures.append(f"{triple}: expected {want}, got {got}")
    return res


def error_rate_table(policy: str = "consistent-guess") -> dict:
    return {
        key: exact_error_rate(scenario(key[0]), AttackModel.intercept(key[1], policy), key[2])
        for key in PUBLISHED_RATES
    }


def error_rates_suite(tol: float = 1e-12) -> SuiteResult:
    res = SuiteResult("error-rates")
    guess = error_rate_table("consistent-guess")
    silent = error_rate_table("silent")
    res.lines.append("family intercept check  published  consistent-guess  silent")
    for key, want in PUBLISHED_RATES.items():
        res.lines.append(
            f"{key[0]:6} {key[1]:9} {key[2]:5}  {want:9.4f}  {guess[key]:16.4f}  {silent[key]:6.4f}"
        )
        if abs(guess[key] - want) > tol:
            res.failures.append(
                f"({key[0]}, {key[1]}-intercept, {key[2]}-check): published {want}, "
                f"computed {guess[key]:.6f}"
            )
    return res


def dense_coding_table(r: int = 2):
    """Rows (initial, trent op, user ops, final) over every combination."""
    rows = []
    for initial in GhzOutcome.all(r + 1):
        for t in PauliOp:
            for ops in itertools.product(USER_OPS, repeat=r):
                rows.append((initial, t, ops, final_label(initial, t, ops)))
    return rows


def dense_coding_suite(r_values=(2, 3)) -> SuiteResult:
    res = SuiteResult("dense-coding")
    psi1, psi8 = GhzOutcome.psi(1), GhzOutcome.psi(8)
    s = apply_gate(apply_gate(psi1.state, Gate.X, 0), Gate.IY, 1)
    label = final_label(psi1, PauliOp.X, (PauliOp.IY, PauliOp.I))
    res.lines.append(f"sx (x) isy (x) I on Psi1 -> {label}; statevector matches Psi8: "
                     f"{states_equal_up_to_phase(s, psi8.state)}")
    if label != psi8 or not states_equal_up_to_phase(s, psi8.state):
        res.failures.append(f"sx (x) isy (x) I maps Psi1 to {label}, expected Psi8")
    for r in r_values:
        rows = dense_coding_table(r)
        ok = 0
        for initial, t, ops, final in rows:
            s = initial.state
            for q, op in enumerate((t, *ops)):
                s = apply_gate(s, op.gate, q)
            if not states_equal_up_to_phase(s, final.state):
                res.failures.append(f"r={r}: label algebra disagrees with simulation at {initial},{t.name},{ops}")
            for j in range(1, r + 1):
                try:
                    got = solve_trent_op(initial, final, ops[j - 1], j)
                except IntegrityError as exc:
                    res.failures.append(f"r={r}: {exc}")
                    continue
                if got is not t:
                    res.failures.append(
                        f"r={r}: user {j} decoded {got.name} for {initial}->{final}, sent {t.name}")
                else:
                    ok += 1
        res.lines.append(f"r={r}: {len(rows)} combinations, {ok}/{len(rows) * r} user decodes correct")
    return res


def qe_roundtrip_suite(r_max: int = 4, tol: float = 1e-10) -> SuiteResult:
    res = SuiteResult("qe-roundtrip")
    rng = np.random.default_rng(0)
    cases = 0
    for r in range(1, r_max + 1):
        key = ghz_plus(r + 1)
        for size in range(1, r + 1):
            for subset in itertools.combinations(range(1, r + 1), size):
                for h in itertools.product((0, 1), repeat=size):
                    h_bits = dict(zip(subset, h))
                    for p in (0, 1):
                        cases += 1
                        state, rec = encrypt_payload(key, p, subset, h_bits)
                        for x in subset:
                            for basis, dist in carrier_marginals(state, rec.carriers[x]).items():
                                if any(abs(v - 0.5) > 1e-12 for v in dist.values()):
                                    res.failures.append(
                                        f"r={r} subset={subset} h={h} p={p}: {basis} marginal {dist}")
                            d = decrypt_distribution(state, rec, x)
                            if d[str(p)] < 1 - tol:
                                res.failures.append(
                                    f"r={r} subset={subset} h={h} p={p}: user {x} gets p w.p. {d[str(p)]}")
                        results, after = finish_round(state, rec, rng)
                        fidelity = abs(after.inner(key)) ** 2
                        if fidelity < 1 - tol or any(v != p for v in results.values()):
                            res.failures.append(
                                f"r={r} subset={subset} h={h} p={p}: results {results}, "
                                f"key fidelity {fidelity}")
    res.lines.append(f"{cases} exhaustive cases (r <= {r_max}): decrypt exact, "
                     f"carrier marginals uniform, key fidelity >= 1-{tol:g}")
    return res


def run_suite(name: str) -> list[SuiteResult]:
    suites = {
        "swap-table": swap_table_suite,
        "error-rates": error_rates_suite,
        "dense-coding": dense_coding_suite,
        "qe-roundtrip": qe_roundtrip_suite,
    }
    if name == "all":
        return [f() for f in suites.values()]
    if name not in suites:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return [suites[name]()]


def bell_triple_distribution(state, r: int = 2) -> dict:
    """Joint (Trent, A_1..A_r) Bell outcomes of a 2(r+1)-qubit group state."""
    pairs = group_pairs(r)
    return joint_distribution(state, pairs, ["bell"] * len(pairs))


def psi1_pair(r: int = 2):
    return tensor(ghz_plus(r + 1), ghz_plus(r + 1))


__all__ = [
    "IDENTITY_TRIPLES",
    "PUBLISHED_RATES",
    "SUITES",
    "SuiteResult",
    "X_X_TRIPLES",
    "bell_triple_distribution",
    "dense_coding_table",
    "error_rate_table",
    "psi1_pair",
    "run_suite",
]
