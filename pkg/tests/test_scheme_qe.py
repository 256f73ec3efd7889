import itertools

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from qbc.adversary import AttackModel
from qbc.errors import ConfigError
from qbc.qsim import ghz_plus, outcome_distribution, states_equal_up_to_phase
from qbc.scheme_qe import (
    DECOY_STATES,
    KeyStateConsumed,
    QeSessionConfig,
    QuantumKey,
    carrier_marginals,
    decoy_error_probability,
    decoy_state,
    decrypt_distribution,
    encrypt_payload,
    finish_round,
    insert_decoys,
    run_qe_session,
    verify_decoys,
)


def subsets(r):
    users = range(1, r + 1)
    for k in range(1, r + 1):
        yield from itertools.combinations(users, k)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_round_trip_exhaustive(r):
    key = ghz_plus(r + 1)
    for subset in subsets(r):
        for bit in (0, 1):
            for hs in itertools.product((0, 1), repeat=len(subset)):
                h = dict(zip(subset, hs))
                state, rec = encrypt_payload(key, bit, subset, h)
                for x in subset:
                    d = decrypt_distribution(state, rec, x)
                    assert d[str(bit)] == pytest.approx(1, abs=1e-12)
                    m = carrier_marginals(state, rec.carriers[x])
                    assert m["Z"]["0"] == pytest.approx(0.5, abs=1e-12)
                results, after = finish_round(state, rec, np.random.default_rng(0))
                assert set(results.values()) == {bit}
                assert abs(after.inner(key)) ** 2 > 1 - 1e-10


def test_carrier_reveals_nothing_in_x_either():
    state, rec = encrypt_payload(ghz_plus(3), 1, (1, 2), {1: 0, 2: 1})
    for q in rec.carriers.values():
        assert carrier_marginals(state, q)["X"]["+"] == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=6), st.integers(0, 2**31))
def test_key_survives_repeated_rounds(bits, seed):
    rng = np.random.default_rng(seed)
    key = ghz_plus(3)
    state = key
    for b in bits:
        h = {1: int(rng.integers(0, 2)), 2: int(rng.integers(0, 2))}
        enc, rec = encrypt_payload(state, b, (1, 2), h)
        results, state = finish_round(enc, rec, rng)
        assert results == {1: b, 2: b}
    assert states_equal_up_to_phase(state, key)


def test_key_state_reuse_within_round():
    qkey = QuantumKey(2, {0: ghz_plus(3)})
    qkey.acquire(0)
    with pytest.raises(KeyStateConsumed):
        qkey.acquire(0)
    qkey.release(0, ghz_plus(3))
    qkey.acquire(0)
    with pytest.raises(KeyStateConsumed):
        qkey.acquire(7)


def test_wrong_h_key_gives_random_bit():
    state, rec = encrypt_payload(ghz_plus(3), 1, (1,), {1: 1})
    rec.h_bits[1] = 0
    d = decrypt_distribution(state, rec, 1)
    assert d["1"] == pytest.approx(0.5, abs=1e-12)


# -- decoys -----------------------------------------------------------------

def test_insert_decoys_rate_zero():
    wire, decoys = insert_decoys([0, 1, 2], 0.0, np.random.default_rng(0))
    assert [w.ref for w in wire] == [0, 1, 2] and decoys == {}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(0.05, 0.9), st.integers(0, 2**31))
def test_insert_decoys_keeps_carrier_order(n, rate, seed):
    wire, decoys = insert_decoys(list(range(n)), rate, np.random.default_rng(seed))
    assert [w.ref for w in wire if w.kind == "carrier"] == list(range(n))
    assert all(wire[p].kind == "decoy" and wire[p].ref == lab for p, lab in decoys.items())
    assert len(decoys) / len(wire) >= rate - 1 / len(wire)


@pytest.mark.parametrize("attack,expected", [
    (AttackModel.none(), 0.0),
    (AttackModel.intercept("Z"), 0.25),
    (AttackModel.intercept("X"), 0.25),
    (AttackModel.intercept("random"), 0.25),
])
def test_decoy_error_probability(attack, expected):
    assert decoy_error_probability(attack) == pytest.approx(expected, abs=1e-12)


def test_z_measurement_on_plus_decoy():
    d = outcome_distribution(decoy_state("+"), [0], "Z")
    assert d["0"] == pytest.approx(0.5)
    assert set(DECOY_STATES) == {"0", "1", "+", "-"}


def test_verify_decoys():
    decoys = {0: "0", 3: "+"}
    assert verify_decoys({0: "0", 3: "+"}, decoys).passed
    v = verify_decoys({0: "1", 3: "+"}, decoys, threshold=0.0)
    assert not v.passed and v.errors == 1 and v.error_rate == 0.5


# -- sessions ---------------------------------------------------------------

@pytest.mark.parametrize("subset", [(1,), (2,), (1, 3), (1, 2, 3)])
def test_session_decodes_hex_payload(subset):
    cfg = QeSessionConfig(r=3, subset=subset, payload_bits="0xA5", seed=2)
    rep = run_qe_session(cfg)
    assert rep.decode_ok
    assert set(rep.decoded) == {f"Alice_{x}" for x in subset}
    assert set(rep.decoded.values()) == {"10100101"}


def test_multi_round_session():
    rep = run_qe_session(QeSessionConfig(payload_bits="0x3C", rounds=3, seed=4))
    assert rep.decode_ok


def test_payload_intercept_hits_decoys():
    cfg = QeSessionConfig(payload_bits="0xA5", n_key_states=16, decoy_rate=0.5, seed=0)
    attack = AttackModel.intercept("Z", stage="payload")
    aborted = sum(run_qe_session(cfg, attack=attack, rng=np.random.default_rng(s)).aborted
                  for s in range(20))
    assert aborted >= 15


def test_forward_intercept_caught_at_check():
    cfg = QeSessionConfig(payload_bits="01", n_key_states=64, sample_fraction=0.5)
    aborted = sum(run_qe_session(cfg, attack=AttackModel.intercept("X"),
                                 rng=np.random.default_rng(s)).aborted_at == "check"
                  for s in range(20))
    assert aborted >= 18


@pytest.mark.parametrize("kwargs", [
    {"subset": ()},
    {"subset": (3,)},
    {"payload_bits": "0x" + "F" * 8},
    {"payload_bits": "012"},
    {"rounds": 0},
    {"decoy_rate": 1.0},
    {"impostors": (4,)},
])
def test_config_errors(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        QeSessionConfig(**kwargs)


def test_subset_is_normalised():
    cfg = QeSessionConfig(r=3, subset=(3, 1, 3))
    assert cfg.subset == (1, 3)
    assert cfg.ak_len == 32
