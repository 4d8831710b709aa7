import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import toeplitz

from dpsqkd import InvalidParameterError, get_preset
from dpsqkd.model import secure_fraction
from dpsqkd.postprocess import (
    STATUS_EMPTY,
    STATUS_OK,
    STATUS_THRESHOLD,
    distill,
    estimate_qber,
    key_to_bytes,
    key_to_hex,
    reconcile,
    toeplitz_diagonals,
    toeplitz_hash,
)
from dpsqkd.sim import SiftedKeyPair

PARAMS = get_preset("paper-dcr001")


def planted_pair(n, n_err, seed=0):
    gen = np.random.default_rng(seed)
    alice = gen.integers(0, 2, n, dtype=np.uint8)
    bob = alice.copy()
    flip = gen.choice(n, size=n_err, replace=False)
    bob[flip] ^= 1
    return SiftedKeyPair(alice, bob, np.arange(1, n + 1, dtype=np.int64))


def test_estimate_full_comparison():
    q, rest = estimate_qber(planted_pair(100, 3), 1.0)
    assert q == pytest.approx(0.03)
    assert len(rest) == 0


def test_estimate_sample_is_unbiased():
    pair = planted_pair(2000, 100)
    estimates = []
    for s in range(100):
        q, rest = estimate_qber(pair, 0.1, seed=s)
        assert len(rest) == 1800
        assert np.all(np.diff(rest.slot_indices) > 0)
        estimates.append(q)
    assert abs(np.mean(estimates) - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 200) / math.sqrt(100)


def test_estimate_bad_inputs():
    with pytest.raises(InvalidParameterError):
        estimate_qber(planted_pair(0, 0))
    with pytest.raises(InvalidParameterError):
        estimate_qber(planted_pair(10, 0), 0.0)


def test_reconcile_leakage():
    rec = reconcile(planted_pair(1000, 30), 0.03, 1.2)
    assert rec.leaked_bits == 234
    assert rec.disclosed_fraction == pytest.approx(1.2 * 0.19439, abs=1e-4)
    assert reconcile(planted_pair(100, 3), 0.0264, 1.2).disclosed_fraction == pytest.approx(0.2108, abs=5e-4)
    rec = reconcile(planted_pair(50, 0), 0.0, 1.2)
    assert rec.leaked_bits == 0


def test_reconcile_output_matches_alice():
    pair = planted_pair(500, 20)
    rec = reconcile(pair, 0.04, 1.2)
    np.testing.assert_array_equal(rec.corrected_bits, pair.alice_bits)
    with pytest.raises(InvalidParameterError):
        reconcile(pair, 0.04, 0.9)


def dense_oracle(x, out_len, hash_seed):
    n = len(x)
    d = toeplitz_diagonals(n, out_len, hash_seed)
    T = toeplitz(d[n - 1:], d[n - 1::-1])
    return (T.astype(np.int64) @ np.asarray(x, np.int64)) % 2


def test_toeplitz_edges():
    assert toeplitz_hash(np.ones(16, np.uint8), 0, 1).size == 0
    np.testing.assert_array_equal(toeplitz_hash(np.zeros(64, np.uint8), 20, 3), np.zeros(20, np.uint8))
    with pytest.raises(InvalidParameterError):
        toeplitz_hash(np.ones(4, np.uint8), 5, 0)


def test_toeplitz_small_key(kernel_backend):
    x = [1, 0, 1, 1, 0, 0, 1, 0]
    out = toeplitz_hash(x, 4, 42)
    np.testing.assert_array_equal(out, dense_oracle(x, 4, 42))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2 ** 32), st.data())
def test_toeplitz_linearity(n, hash_seed, data):
    m = data.draw(st.integers(1, n))
    a = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), np.uint8)
    b = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), np.uint8)
    lhs = toeplitz_hash(a ^ b, m, hash_seed)
    rhs = toeplitz_hash(a, m, hash_seed) ^ toeplitz_hash(b, m, hash_seed)
    np.testing.assert_array_equal(lhs, rhs)
    np.testing.assert_array_equal(toeplitz_hash(a, m, hash_seed), dense_oracle(a, m, hash_seed))


def test_distill_error_free():
    rep = distill(planted_pair(1000, 0), PARAMS, hash_seed=5)
    assert rep.status == STATUS_OK
    assert rep.secure_length == 600
    assert rep.final_key.size == 600


def test_distill_above_threshold():
    rep = distill(planted_pair(1000, 109), PARAMS)
    assert rep.status == STATUS_THRESHOLD
    assert rep.secure_length == 0 and rep.final_key.size == 0
    assert "exceeds" in rep.message and "10.90 %" in rep.message


def test_distill_empty():
    rep = distill(planted_pair(0, 0), PARAMS)
    assert rep.status == STATUS_EMPTY and rep.qber_est is None


def test_distill_336km_rate():
    rate, n = 0.22, 100_000
    duration = n / rate
    rep = distill(planted_pair(n, 2930), PARAMS, seed=1)
    assert abs(rep.secure_rate(duration) - 0.03) <= 0.005


def test_distill_monotone_in_qber():
    lengths = [distill(planted_pair(5000, k), PARAMS).secure_length for k in range(0, 250, 25)]
    assert all(a >= b for a, b in zip(lengths, lengths[1:]))


def test_distill_rate_identity():
    n, k = 20000, 300
    rep = distill(planted_pair(n, k), PARAMS)
    assert rep.secure_length == math.floor(n * secure_fraction(k / n, PARAMS) + 1e-9)


def test_distill_sampled_discards_sample():
    rep = distill(planted_pair(10000, 100), PARAMS, sample_fraction=0.2, seed=3)
    assert rep.remaining_length == 8000
    assert rep.secure_length <= 8000 * 0.6


def test_distill_deterministic():
    pair = planted_pair(3000, 30)
    a = distill(pair, PARAMS, sample_fraction=0.5, seed=9)
    b = distill(pair, PARAMS, sample_fraction=0.5, seed=9)
    np.testing.assert_array_equal(a.final_key, b.final_key)
    c = distill(pair, PARAMS, sample_fraction=0.5, seed=9, hash_seed=a.hash_seed + 1)
    assert not np.array_equal(a.final_key, c.final_key)


def test_key_export():
    bits = [1, 0, 1, 1, 0, 0, 1, 0, 1]
    assert key_to_bytes(bits) == bytes([0b10110010, 0b10000000])
    assert key_to_hex(bits) == "b280"
    assert key_to_hex([]) == ""
