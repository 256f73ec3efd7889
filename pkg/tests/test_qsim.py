import functools

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from qbc.errors import QubitIndexError, SizeError
from qbc.qsim import (
    BellOutcome,
    Gate,
    GhzOutcome,
    PauliOp,
    StateVector,
    apply_cnot,
    apply_gate,
    apply_unitary,
    discard_qubits,
    ghz_plus,
    is_unitary,
    joint_distribution,
    make_basis_state,
    make_ghz,
    measure_bell,
    measure_ghz,
    measure_x,
    measure_z,
    minus_state,
    outcome_distribution,
    plus_state,
    post_measurement_branches,
    states_equal_up_to_phase,
    tensor,
)

S = 1 / np.sqrt(2)

# Independent dense-matrix oracle.
I2 = np.eye(2)
ORACLE = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]]),
    "IY": np.array([[0, 1], [-1, 0]]),
    "Z": np.diag([1, -1]),
    "H": np.array([[1, 1], [1, -1]]) * S,
}


def lift(m, q, n):
    return functools.reduce(np.kron, [m if k == q else I2 for k in range(n)])


def cnot_matrix(c, t, n):
    out = np.zeros((2**n, 2**n))
    for i in range(2**n):
        bits = list(format(i, f"0{n}b"))
        if bits[c] == "1":
            bits[t] = "1" if bits[t] == "0" else "0"
        out[int("".join(bits), 2), i] = 1
    return out


@st.composite
def states(draw, min_qubits=1, max_qubits=4):
    n = draw(st.integers(min_qubits, max_qubits))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(v, normalize=True)


def test_basis_state():
    s = make_basis_state("000")
    assert s.amps[0] == 1 and s.n_qubits == 3
    assert make_basis_state("1").amps[1] == 1
    assert outcome_distribution(make_basis_state("01"), [0, 1], "Z")["01"] == 1


@pytest.mark.parametrize("bits", ["", "0" * 15])
def test_basis_state_size_errors(bits):
    with pytest.raises(SizeError):
        make_basis_state(bits)


def test_state_validation():
    with pytest.raises(SizeError):
        StateVector([1, 0, 0])
    with pytest.raises(ValueError):
        StateVector([1, 1])
    with pytest.raises(ValueError):
        StateVector([np.nan, 1])
    assert StateVector([1, 1], normalize=True).norm() == pytest.approx(1)


def test_state_is_read_only():
    s = make_basis_state("0")
    with pytest.raises(ValueError):
        s.amps[0] = 0


@pytest.mark.parametrize("index,sign,pattern,nonzero", [
    (1, "+", "000", {"000": S, "111": S}),
    (2, "-", "000", {"000": S, "111": -S}),
    (3, "+", "100", {"100": S, "011": S}),
    (4, "-", "100", {"100": S, "011": -S}),
    (5, "+", "010", {"010": S, "101": S}),
    (6, "-", "010", {"010": S, "101": -S}),
    (7, "+", "110", {"110": S, "001": S}),
    (8, "-", "110", {"110": S, "001": -S}),
])
def test_psi_labels(index, sign, pattern, nonzero):
    label = GhzOutcome.psi(index)
    assert (label.sign, label.pattern) == (sign, pattern)
    assert label.psi_index == index
    expected = np.zeros(8)
    for bits, a in nonzero.items():
        expected[int(bits, 2)] = a
    assert np.allclose(make_ghz(label).amps, expected, atol=1e-12)


def test_ghz_two_qubits_is_phi_plus():
    assert states_equal_up_to_phase(make_ghz(GhzOutcome(2, "+", "00")), BellOutcome.PHI_PLUS.state)
    with pytest.raises(SizeError):
        GhzOutcome(1, "+", "0")


def test_ghz_of_canonicalizes():
    assert GhzOutcome.of("-", "001") == GhzOutcome.psi(8)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_ghz_basis_orthonormal(n):
    m = np.array([g.vector for g in GhzOutcome.all(n)])
    assert len(m) == 2**n
    assert np.allclose(m.conj() @ m.T, np.eye(2**n), atol=1e-10)


def test_pauli_codes():
    assert {op.name: op.code for op in PauliOp} == {"I": "00", "X": "01", "IY": "10", "Z": "11"}
    assert {PauliOp.from_code(op.code) for op in PauliOp} == set(PauliOp)


@pytest.mark.parametrize("gate", list(Gate))
def test_gates_unitary(gate):
    assert np.allclose(gate.matrix @ gate.matrix.conj().T, I2, atol=1e-12)
    assert np.allclose(gate.matrix, ORACLE[gate.name])


def test_gate_examples():
    assert states_equal_up_to_phase(apply_gate(make_basis_state("0"), Gate.H, 0), plus_state())
    assert np.allclose(apply_gate(make_basis_state("0"), Gate.IY, 0).amps, [0, -1])
    s = plus_state()
    assert np.allclose(apply_gate(apply_gate(s, Gate.H, 0), Gate.H, 0).amps, s.amps)


@settings(max_examples=60, deadline=None)
@given(states(), st.sampled_from(list(Gate)), st.data())
def test_apply_gate_matches_oracle(state, gate, data):
    q = data.draw(st.integers(0, state.n_qubits - 1))
    got = apply_gate(state, gate, q)
    want = lift(ORACLE[gate.name], q, state.n_qubits) @ state.amps
    assert np.allclose(got.amps, want, atol=1e-12)
    assert abs(got.norm() - 1) < 1e-10


@settings(max_examples=60, deadline=None)
@given(states(min_qubits=2), st.data())
def test_cnot_matches_oracle(state, data):
    n = state.n_qubits
    c = data.draw(st.integers(0, n - 1))
    t = data.draw(st.integers(0, n - 1).filter(lambda x: x != c))
    assert np.allclose(apply_cnot(state, c, t).amps, cnot_matrix(c, t, n) @ state.amps)


def test_cnot_examples():
    assert apply_cnot(make_basis_state("10"), 0, 1).amps[3] == 1
    assert apply_cnot(make_basis_state("00"), 0, 1).amps[0] == 1
    bell = BellOutcome.PHI_PLUS.state
    out = apply_gate(apply_cnot(bell, 0, 1), Gate.H, 0)
    assert np.allclose(out.amps, make_basis_state("00").amps, atol=1e-12)
    with pytest.raises(QubitIndexError):
        apply_cnot(bell, 1, 1)
    with pytest.raises(QubitIndexError):
        apply_cnot(bell, 0, 2)


@settings(max_examples=40, deadline=None)
@given(states(max_qubits=3), states(max_qubits=3), st.sampled_from(list(Gate)), st.data())
def test_gates_preserve_inner_products(a, b, gate, data):
    if a.n_qubits != b.n_qubits:
        b = StateVector(np.resize(b.amps, 2**a.n_qubits), normalize=True)
    q = data.draw(st.integers(0, a.n_qubits - 1))
    before = a.inner(b)
    after = apply_gate(a, gate, q).inner(apply_gate(b, gate, q))
    assert abs(before - after) < 1e-10


def test_apply_unitary_on_subset_matches_oracle():
    rng = np.random.default_rng(3)
    s = StateVector(rng.normal(size=16) + 1j * rng.normal(size=16), normalize=True)
    u = np.kron(ORACLE["H"], ORACLE["X"])
    # qubits (2, 0): H on qubit 2, X on qubit 0
    want = lift(ORACLE["X"], 0, 4) @ lift(ORACLE["H"], 2, 4) @ s.amps
    assert np.allclose(apply_unitary(s, u, [2, 0]).amps, want)
    with pytest.raises(SizeError):
        apply_unitary(s, np.eye(4), [0])


def test_tensor():
    assert tensor(make_basis_state("0"), make_basis_state("1")).amps[1] == 1
    big = tensor(ghz_plus(3), ghz_plus(3))
    assert big.n_qubits == 6 and abs(big.norm() - 1) < 1e-12
    with pytest.raises(SizeError):
        tensor(make_basis_state("0" * 8), make_basis_state("0" * 7))


@settings(max_examples=30, deadline=None)
@given(states(max_qubits=3), states(max_qubits=3))
def test_tensor_matches_kron(a, b):
    assert np.allclose(tensor(a, b).amps, np.kron(a.amps, b.amps))
    assert abs(tensor(a, b).norm() - 1) < 1e-10


def test_measure_z_examples():
    rng = np.random.default_rng(0)
    bits, post = measure_z(make_basis_state("000"), [0, 1, 2], rng)
    assert bits == "000"
    counts = {"0": 0, "1": 0}
    for _ in range(400):
        b, post = measure_z(ghz_plus(3), [0], rng)
        counts[b] += 1
        rest, _ = measure_z(post, [1, 2], rng)
        assert rest == b * 2
    assert 150 < counts["0"] < 250


def test_repeated_measurement_is_stable():
    rng = np.random.default_rng(1)
    b1, post = measure_z(plus_state(), [0], rng)
    for _ in range(5):
        b2, post = measure_z(post, [0], rng)
        assert b2 == b1


def test_measure_x_examples():
    rng = np.random.default_rng(2)
    assert measure_x(plus_state(), [0], rng)[0] == "+"
    for _ in range(100):
        sign, post = measure_x(ghz_plus(3), [0], rng)
        users, _ = measure_x(post, [1, 2], rng)
        assert users in (("++", "--") if sign == "+" else ("+-", "-+"))


def test_measure_bell_examples():
    rng = np.random.default_rng(4)
    assert measure_bell(BellOutcome.PHI_PLUS.state, 0, 1, rng)[0] is BellOutcome.PHI_PLUS
    d = outcome_distribution(tensor(ghz_plus(3), ghz_plus(3)), [1, 4], "bell")
    assert all(abs(p - 0.25) < 1e-12 for p in d.values())
    phi2 = apply_gate(apply_gate(ghz_plus(3), Gate.H, 1), Gate.H, 2)
    d = outcome_distribution(phi2, [1, 2], "bell")
    assert {b.value: p for b, p in d.items()} == pytest.approx(
        {"phi+": 0.5, "phi-": 0, "psi+": 0.5, "psi-": 0}, abs=1e-12)
    with pytest.raises(QubitIndexError):
        measure_bell(phi2, 1, 1, rng)


def test_measure_ghz_examples():
    rng = np.random.default_rng(5)
    assert measure_ghz(make_ghz(GhzOutcome.psi(8)), [0, 1, 2], rng)[0] == GhzOutcome.psi(8)
    s = apply_gate(apply_gate(ghz_plus(3), Gate.X, 0), Gate.IY, 1)
    assert measure_ghz(s, [0, 1, 2], rng)[0] == GhzOutcome.psi(8)
    mix = StateVector(GhzOutcome.psi(1).vector + GhzOutcome.psi(2).vector, normalize=True)
    d = outcome_distribution(mix, [0, 1, 2], "ghz")
    assert d[GhzOutcome.psi(1)] == pytest.approx(0.5) and d[GhzOutcome.psi(2)] == pytest.approx(0.5)
    with pytest.raises(SizeError):
        measure_ghz(s, [0], rng)


@settings(max_examples=40, deadline=None)
@given(states(min_qubits=2, max_qubits=4), st.sampled_from(["Z", "X", "bell", "ghz"]), st.data())
def test_born_totality_and_collapse_norm(state, kind, data):
    k = 2 if kind == "bell" else data.draw(st.integers(2 if kind == "ghz" else 1, state.n_qubits))
    qubits = data.draw(st.permutations(range(state.n_qubits)))[:k]
    d = outcome_distribution(state, qubits, kind)
    assert abs(sum(d.values()) - 1) < 1e-10
    for _, p, post in post_measurement_branches(state, qubits, kind):
        assert abs(post.norm() - 1) < 1e-10
        assert outcome_distribution(post, qubits, kind)[_] == pytest.approx(1)


def test_fixed_seed_determinism():
    def outcomes(seed):
        rng = np.random.default_rng(seed)
        return [measure_z(plus_state(), [0], rng)[0] for _ in range(50)]
    assert outcomes(9) == outcomes(9)


def test_equal_up_to_phase():
    s = ghz_plus(3)
    assert states_equal_up_to_phase(s, StateVector(-s.amps))
    assert not states_equal_up_to_phase(make_basis_state("0"), make_basis_state("1"))
    xx = apply_gate(apply_gate(s, Gate.X, 0), Gate.X, 1)
    assert states_equal_up_to_phase(xx, make_ghz(GhzOutcome.psi(7)))
    with pytest.raises(SizeError):
        states_equal_up_to_phase(s, plus_state())


def test_label_algebra_matches_simulation():
    for label in GhzOutcome.all(3):
        for ops in [(a, b, c) for a in PauliOp for b in PauliOp for c in PauliOp]:
            s = label.state
            for q, op in enumerate(ops):
                s = apply_gate(s, op.gate, q)
            assert states_equal_up_to_phase(s, label.apply_paulis(ops).state)


def test_joint_distribution_product_rule():
    s = tensor(ghz_plus(3), ghz_plus(3))
    joint = joint_distribution(s, [[0, 3], [1, 4], [2, 5]], ["bell"] * 3)
    assert abs(sum(joint.values()) - 1) < 1e-12
    marg = outcome_distribution(s, [0, 3], "bell")
    for b in BellOutcome:
        assert sum(p for k, p in joint.items() if k[0] is b) == pytest.approx(marg[b])


def test_discard_qubits():
    s = tensor(ghz_plus(3), make_basis_state("10"))
    assert states_equal_up_to_phase(discard_qubits(s, [3, 4], "10"), ghz_plus(3))
    with pytest.raises(ValueError):
        discard_qubits(s, [3, 4], "00")


def test_is_unitary():
    assert is_unitary(ORACLE["H"])
    assert not is_unitary(np.ones((2, 2)))
    assert states_equal_up_to_phase(minus_state(), apply_gate(make_basis_state("1"), Gate.H, 0))
