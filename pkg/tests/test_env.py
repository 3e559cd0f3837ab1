import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iot_noma.env import (
    EnvConfig,
    NomaEnv,
    RewardWeights,
    interference_received,
    reward_energy,
    reward_fairness,
    reward_interference,
    reward_reliability,
    reward_throughput,
)
from iot_noma.gold_codes import build_codebook


@pytest.fixture(scope="module")
def book():
    return build_codebook(5, 8, "greedy")


def make_env(book, n=10, seed=0, **kw):
    return NomaEnv(EnvConfig(num_devices=n, **kw), book, seed)


def test_reward_throughput_examples():
    assert reward_throughput([0.0, 0.0], [1, 1], [True, True]) == 0.0
    assert reward_throughput([1.0], [1.0], [True]) == 1.0
    assert reward_throughput([3.0], [1.0], [True]) == 2.0
    assert reward_throughput([3.0, 7.0], [1.0, 2.0], [True, False]) == 2.0
    with pytest.raises(ValueError):
        reward_throughput([-1.0], [1.0], [True])


def test_reward_energy_examples():
    assert reward_energy([0.1, 0.2], [False, False], [1.0, 1.0]) == 0.0
    assert reward_energy([0.1], [True], [10.0], 1e-6) == pytest.approx(-0.01, abs=1e-7)
    v = reward_energy([0.1], [True], [0.0], 1e-6)
    assert math.isfinite(v) and abs(v) <= 0.1 / 1e-6 + 1e-9


def test_reward_reliability_examples():
    thr = np.array([5.0, 5.0, 5.0])
    assert reward_reliability([9.0, 9.0, 9.0], [False] * 3, thr) == 0
    assert reward_reliability([5.0, 5.0, 5.0], [True] * 3, thr) == 3
    sinr = np.array([6.0, 4.9, 5.0])
    crit = np.array([True, True, True])
    oracle = sum(1 for s, c, t in zip(sinr, crit, thr) if c and s >= t)
    assert reward_reliability(sinr, crit, thr) == oracle == 2


def test_reward_interference_examples():
    rho = np.array([[1.0, 0.1], [0.1, 1.0]])
    assert reward_interference([0, 1], [1.0, 2.0], [True, False], rho) == 0.0
    assert reward_interference([0, 0], [0.3, 0.5], [True, True], rho) == pytest.approx(0.8, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reward_interference_oracle_n5(seed):
    r = np.random.default_rng(seed)
    rho = r.random((4, 4))
    rho = (rho + rho.T) / 2
    np.fill_diagonal(rho, 1.0)
    codes = r.integers(0, 4, 5)
    gains = r.random(5)
    active = r.random(5) < 0.7
    oracle = 0.0
    for i in range(5):
        for j in range(5):
            if i != j and active[i] and active[j]:
                oracle += rho[codes[i], codes[j]] * gains[j]
    assert reward_interference(codes, gains, active, rho) == pytest.approx(oracle, rel=1e-12, abs=1e-15)


def test_reward_fairness_examples():
    assert reward_fairness([]) == 1.0
    assert reward_fairness([3.0, 3.0, 3.0]) == pytest.approx(1.0)
    assert reward_fairness([0.0, 0.0, 5.0, 0.0]) == pytest.approx(0.25)
    assert reward_fairness([1.0, 2.0, 3.0]) == pytest.approx(6 / 7, abs=1e-15)
    assert reward_fairness([4.2]) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20))
def test_jain_bounds(x):
    j = reward_fairness(x)
    assert 1 / len(x) - 1e-12 <= j <= 1 + 1e-12


def test_reset_determinism_and_fresh_state(book):
    a, b = make_env(book, seed=7), make_env(book, seed=7)
    oa, ob = a.reset(), b.reset()
    assert np.array_equal(oa.flatten(), ob.flatten())
    assert np.all(oa.energies == 1.0)
    assert oa.flatten().size == 4 * 10
    assert np.all(np.isfinite(oa.flatten()))
    # buffers are empty apart from this step's arrivals
    assert np.all(oa.buffers[~oa.activity] == 0)


def test_trajectory_replay_bit_identical(book):
    def roll(seed):
        env = make_env(book, n=12, seed=seed)
        out = []
        for _ in range(2):
            env.reset()
            r = np.random.default_rng(1)
            done = False
            while not done:
                obs, rew, sinr, done = env.step(r.integers(0, book.size, 12))
                out.append(np.concatenate([obs.flatten(), sinr, [rew.combined]]))
        return np.array(out)

    assert np.array_equal(roll(3), roll(3))
    assert not np.array_equal(roll(3), roll(4))


def test_episode_length_and_done(book):
    env = make_env(book)
    env.reset()
    codes = np.zeros(10, dtype=np.int64)
    for t in range(100):
        _, _, _, done = env.step(codes)
        assert done == (t == 99)
    with pytest.raises(RuntimeError):
        env.step(codes)


def test_malformed_action_rejected_without_mutation(book):
    env = make_env(book)
    env.reset()
    snap = (env.t, env.state.energy.copy(), env.state.buffer.copy(), env.gains.copy())
    for bad in (np.zeros(9, dtype=int), np.full(10, book.size), np.full(10, -1), np.zeros(10)):
        with pytest.raises(ValueError):
            env.step(bad)
    assert env.t == snap[0]
    assert np.array_equal(env.state.energy, snap[1])
    assert np.array_equal(env.state.buffer, snap[2])
    assert np.array_equal(env.gains, snap[3])


def test_all_inactive_and_singleton(book):
    env = make_env(book, n=4)
    env.reset()
    env.state.active[:] = False
    rew, sinr, _ = env.evaluate(np.zeros(4, dtype=np.int64))
    assert rew.throughput == 0.0 and rew.interference == 0.0 and rew.fairness == 1.0
    assert np.all(sinr == 0)
    env.state.active[:] = [False, True, False, False]
    env.state.buffer[1] = 1
    rew, _, _ = env.evaluate(np.zeros(4, dtype=np.int64))
    assert rew.fairness == 1.0
    assert rew.interference == 0.0


def test_n3_hand_oracle(book):
    w = RewardWeights(1.0, 0.5, 2.0, 0.5, 1.0)
    env = make_env(book, n=3, seed=0, reward=w)
    env.reset()
    env.population.classes[:] = [0, 1, 0]
    env.population.tx_power_dbm[:] = [20.0, 23.0, 10.0]
    env.weights = np.array([2.0, 1.0, 2.0])
    env.thresholds = 10 ** (np.array([7.0, 3.0, 7.0]) / 10)
    env.gains = np.array([1e-9, 4e-10, 2.5e-8])
    env.state.active[:] = [True, True, True]
    env.state.buffer[:] = [1, 1, 1]
    env.state.energy[:] = [5.0, 0.5, 50.0]
    codes = np.array([0, 0, 1])
    rew, sinr, info = env.evaluate(codes)

    # hand evaluation, one device at a time
    rho = book.rho
    p_mw = [100.0, 10 ** 2.3, 10.0]
    p_w = [x / 1000 for x in p_mw]
    g = [1e-9, 4e-10, 2.5e-8]
    noise = 10 ** ((-174 + 10 * math.log10(20e6) + 7) / 10)
    ext = 10 ** (-100 / 10)
    s = []
    for i in range(3):
        interf = sum(rho[codes[i], codes[j]] * p_mw[j] * g[j] for j in range(3) if j != i)
        s.append(127 * p_mw[i] * g[i] / (noise + interf + ext))
    wts = [2.0, 1.0, 2.0]
    thr = sum(wts[i] * math.log2(1 + s[i]) for i in range(3))
    en = -sum(p_w[i] / (e + 1e-6) for i, e in enumerate([5.0, 0.5, 50.0]))
    req = [10 ** 0.7, 10 ** 0.3, 10 ** 0.7]
    rel = sum(1 for i in (0, 2) if s[i] >= req[i])
    pen = sum(rho[codes[i], codes[j]] * g[j] for i in range(3) for j in range(3) if i != j)
    rates = [20e6 * math.log2(1 + x) for x in s]
    fair = sum(rates) ** 2 / (3 * sum(r * r for r in rates))
    combined = 1.0 * thr + 0.5 * en + 2.0 * rel - 0.5 * pen + 1.0 * fair

    np.testing.assert_allclose(sinr, s, rtol=1e-12)
    assert rew.throughput == pytest.approx(thr, abs=1e-9)
    assert rew.energy == pytest.approx(en, abs=1e-9)
    assert rew.reliability == rel
    assert rew.interference == pytest.approx(pen, abs=1e-9)
    assert rew.fairness == pytest.approx(fair, abs=1e-9)
    assert rew.combined == pytest.approx(combined, abs=1e-9)


def test_combined_recombines_exactly(book):
    env = make_env(book, n=15, seed=2)
    env.reset()
    r = np.random.default_rng(0)
    for _ in range(20):
        _, rew, _, _ = env.step(r.integers(0, book.size, 15))
        w = rew.weights
        manual = (w.throughput * rew.throughput + w.energy * rew.energy + w.reliability * rew.reliability
                  - w.interference * rew.interference + w.fairness * rew.fairness)
        assert rew.combined == pytest.approx(manual, abs=1e-12)
        assert rew.per_device.sum() + w.fairness * rew.fairness == pytest.approx(rew.combined, rel=1e-9, abs=1e-9)


def test_distinct_codes_never_worse_than_shared(book):
    env = make_env(book, n=8, seed=5)
    env.reset()
    env.state.active[:] = True
    same = np.zeros(8, dtype=np.int64)
    distinct = np.arange(8, dtype=np.int64)
    a = interference_received(distinct, env.gains, env.state.active, book.rho).sum()
    b = interference_received(same, env.gains, env.state.active, book.rho).sum()
    assert a <= b


def test_energy_and_buffer_evolution(book):
    env = make_env(book, n=20, seed=1)
    env.reset()
    prev = env.state.energy.copy()
    r = np.random.default_rng(2)
    done = False
    while not done:
        obs, _, _, done = env.step(r.integers(0, book.size, 20))
        assert np.all(env.state.energy <= prev)
        assert np.all((obs.energies >= 0) & (obs.energies <= 1))
        assert np.all((obs.buffers >= 0) & (obs.buffers <= 1))
        prev = env.state.energy.copy()


def test_served_packets_require_threshold(book):
    env = make_env(book, n=10, seed=3)
    env.reset()
    env.state.active[:] = True
    env.state.buffer[:] = 5
    env.gains = np.full(10, 1e-20)  # nobody reaches threshold
    env.step(np.zeros(10, dtype=np.int64))
    assert np.all(env.last_info.served_packets == 0)


def test_common_random_numbers_across_agents(book):
    a, b = make_env(book, seed=11), make_env(book, seed=11)
    a.reset(), b.reset()
    a.step(np.zeros(10, dtype=np.int64))
    b.step(np.arange(10, dtype=np.int64) % book.size)
    # channel and traffic do not depend on the action taken
    assert np.array_equal(a.gains, b.gains)
    assert np.array_equal(a.state.active, b.state.active)
