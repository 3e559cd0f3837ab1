import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iot_noma import channel as ch


def test_path_loss_values():
    assert ch.path_loss_db(100, 3.5, True) == pytest.approx(32.4 + 20 * math.log10(3.5) + 40, abs=1e-12)
    assert ch.path_loss_db(100, 3.5, True) == pytest.approx(83.28, abs=0.005)
    assert ch.path_loss_db(100, 3.5, False) == pytest.approx(89.87, abs=0.005)
    assert ch.path_loss_db(1, 1, True) == pytest.approx(32.4, abs=1e-12)


def test_path_loss_clamps_below_one_metre():
    assert ch.path_loss_db(0.2, 3.5, True) == ch.path_loss_db(1.0, 3.5, True)


def test_path_loss_vectorized():
    d = np.array([10.0, 100.0])
    out = ch.path_loss_db(d, 3.5, np.array([True, False]))
    assert out[0] == ch.path_loss_db(10.0, 3.5, True)
    assert out[1] == ch.path_loss_db(100.0, 3.5, False)


def test_los_probability():
    assert ch.los_probability(1e-9) == pytest.approx(1.0)
    assert ch.los_probability(18.0) == pytest.approx(1.0, abs=1e-15)
    expected = 18 / 500 * (1 - math.exp(-500 / 36)) + math.exp(-500 / 36)
    assert ch.los_probability(500.0) == pytest.approx(expected, rel=1e-12)
    assert ch.los_probability(500.0) == pytest.approx(0.036, abs=5e-4)
    d = np.linspace(18, 500, 50)
    assert np.all(np.diff(ch.los_probability(d)) < 0)
    with pytest.raises(ValueError):
        ch.los_probability(0.0)


@pytest.mark.parametrize("los", [True, False])
def test_fading_unit_mean_power(los):
    g = ch.sample_fading(np.random.default_rng(3), np.full(200_000, los))
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, rel=0.01)


def test_rayleigh_power_is_exponential():
    g2 = np.abs(ch.sample_fading(np.random.default_rng(4), np.zeros(100_000, dtype=bool))) ** 2
    assert g2.mean() == pytest.approx(1.0, rel=0.01)
    # exponential(1): P(X > 1) = e^-1, variance 1
    assert np.mean(g2 > 1.0) == pytest.approx(math.exp(-1), abs=0.005)
    assert g2.var() == pytest.approx(1.0, rel=0.03)


def test_rician_pure_los_limit():
    g = ch.sample_fading(np.random.default_rng(0), np.ones(100, dtype=bool), rician_k_db=float("inf"))
    assert np.allclose(np.abs(g), 1.0)
    g = ch.sample_fading(np.random.default_rng(0), np.ones(10_000, dtype=bool), rician_k_db=60.0)
    assert np.abs(np.abs(g) - 1.0).max() < 0.01


def test_shadowing_colocated_identical():
    pos = np.array([[5.0, 5.0], [5.0, 5.0], [100.0, 0.0]])
    x = ch.sample_shadowing(pos, 7.8, 10.0, np.random.default_rng(0))
    assert x[0] == pytest.approx(x[1], abs=1e-9)


def test_shadowing_correlation_at_10m():
    rng = np.random.default_rng(11)
    pos = np.array([[0.0, 0.0], [10.0, 0.0]])
    draws = np.array([ch.sample_shadowing(pos, 4.0, 10.0, rng) for _ in range(10_000)])
    r = np.corrcoef(draws.T)[0, 1]
    assert r == pytest.approx(math.exp(-1), abs=0.03)
    assert draws.std(axis=0) == pytest.approx([4.0, 4.0], rel=0.03)


def test_shadowing_single_device():
    rng = np.random.default_rng(2)
    x = np.array([ch.sample_shadowing([[3.0, 4.0]], 4.0, 10.0, rng)[0] for _ in range(20_000)])
    assert x.mean() == pytest.approx(0.0, abs=0.1)
    assert x.std() == pytest.approx(4.0, rel=0.02)


def test_shadowing_rejects_bad_corr_dist():
    with pytest.raises(ValueError):
        ch.sample_shadowing([[0, 0]], 4.0, 0.0, np.random.default_rng(0))


def test_channel_gain_values():
    assert ch.compute_channel_gain(83.28, 0.0, 1.0) == pytest.approx(4.70e-9, rel=1e-3)
    base = ch.compute_channel_gain(83.28, 0.0, 1.0)
    assert ch.compute_channel_gain(83.28, 10.0, 1.0) == pytest.approx(base * 0.1, rel=1e-12)
    assert ch.compute_channel_gain(83.28, 0.0, 0.0) == 0.0


def brute_interference(codes, active, p, g, rho, beta):
    n = len(codes)
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if i != j and active[j]:
                out[i] += rho[codes[i], codes[j]] * p[j] * g[j] * beta[i, j]
    return out


def test_interference_no_other_active():
    rho = np.eye(3)
    out = ch.compute_interference([0, 1, 2], [True, False, False], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], rho)
    assert out[0] == 0.0


def test_interference_shared_code():
    rho = np.array([[1.0, 0.1], [0.1, 1.0]])
    out = ch.compute_interference([1, 1], [True, True], [2.0, 3.0], [0.5, 0.25], rho)
    assert out[0] == 3.0 * 0.25
    assert out[1] == 2.0 * 0.5


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_interference_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    c = 5
    a = rng.random((c, c))
    rho = (a + a.T) / 2
    np.fill_diagonal(rho, 1.0)
    codes = rng.integers(0, c, n)
    active = rng.random(n) < 0.6
    p = rng.uniform(10, 200, n)
    g = rng.uniform(1e-12, 1e-8, n)
    beta = rng.uniform(0.5, 1.5, (n, n))
    fast = ch.compute_interference(codes, active, p, g, rho, beta)
    slow = brute_interference(codes, active, p, g, rho, beta)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_interference_relabeling_invariant(n, seed):
    rng = np.random.default_rng(seed)
    rho = rng.random((4, 4))
    rho = (rho + rho.T) / 2
    codes = rng.integers(0, 4, n)
    active = rng.random(n) < 0.7
    p = rng.uniform(1, 2, n)
    g = rng.uniform(0.1, 1, n)
    perm = rng.permutation(n)
    base = ch.compute_interference(codes, active, p, g, rho)
    permuted = ch.compute_interference(codes[perm], active[perm], p[perm], g[perm], rho)
    np.testing.assert_allclose(permuted, base[perm], rtol=1e-12)


def test_interference_rejects_bad_code():
    with pytest.raises(ValueError):
        ch.compute_interference([0, 3], [True, True], [1, 1], [1, 1], np.eye(3))


def test_noise_and_processing_gain():
    params = ch.ChannelParams()
    assert params.noise_dbm == pytest.approx(-93.99, abs=0.005)
    assert params.processing_gain_db == pytest.approx(21.04, abs=0.005)
    assert abs(params.processing_gain_db - 21.0) < 0.1


def test_sinr_noise_limited_and_idle():
    params = ch.ChannelParams(external_interference_dbm=-np.inf)
    s = ch.compute_sinr(np.array([True, False]), np.array([100.0, 100.0]), np.array([1e-9, 1e-9]), np.zeros(2), params)
    assert s[0] == pytest.approx(127 * 100 * 1e-9 / params.noise_mw, rel=1e-12)
    assert s[1] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-12, 1e-6), st.floats(1e-12, 1e-6), st.floats(1, 200), st.floats(1e-10, 1e-8))
def test_sinr_monotone(i1, i2, p, g):
    params = ch.ChannelParams()
    lo, hi = sorted((i1, i2))
    if lo == hi:
        return
    act = np.array([True])
    s_lo = ch.compute_sinr(act, np.array([p]), np.array([g]), np.array([lo]), params)[0]
    s_hi = ch.compute_sinr(act, np.array([p]), np.array([g]), np.array([hi]), params)[0]
    assert s_lo >= s_hi
    # strict once the gap survives rounding against noise + interference
    denom = params.noise_mw + params.external_interference_mw + hi
    if (hi - lo) / denom > 1e-12:
        assert s_lo > s_hi
    s_more = ch.compute_sinr(act, np.array([p * 1.5]), np.array([g]), np.array([lo]), params)[0]
    assert s_more > s_lo


@settings(max_examples=50, deadline=None)
@given(st.floats(-150, 60))
def test_db_round_trip(db):
    assert ch.linear_to_db(ch.db_to_linear(db)) == pytest.approx(db, rel=1e-12, abs=1e-12)
    assert ch.dbm_to_watts(db) == pytest.approx(ch.dbm_to_mw(db) / 1000, rel=1e-12)


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ch.ChannelParams(bandwidth_hz=0)
    with pytest.raises(ValueError):
        ch.ChannelParams(processing_gain=0.5)
    with pytest.raises(ValueError):
        ch.ChannelParams(shadow_sigma_los_db=-1)
