import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iot_noma.devices import (
    DeviceClass,
    DeviceState,
    initial_periodic_offsets,
    largest_remainder,
    spawn_scenario,
    step_traffic,
    update_energy,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_smart_city_default_counts():
    pop = spawn_scenario("smart_city", rng())
    assert pop.size == 100
    c = pop.counts()
    assert (c[DeviceClass.CRITICAL], c[DeviceClass.PERIODIC], c[DeviceClass.BEST_EFFORT]) == (20, 40, 40)
    assert np.all(np.linalg.norm(pop.positions, axis=1) <= 500)


@pytest.mark.parametrize("kind,n", [("industrial_iot", 60), ("sensor_network", 150)])
def test_scenario_sizes_and_radius(kind, n):
    pop = spawn_scenario(kind, rng(1))
    assert pop.size == n
    r = np.linalg.norm(pop.positions, axis=1)
    assert np.all(r <= 500.0) and np.all(r >= 1.0)


def test_profile_ranges():
    pop = spawn_scenario("sensor_network", rng(2))
    assert np.all((pop.tx_power_dbm >= 10) & (pop.tx_power_dbm <= 23))
    assert np.all((pop.battery_capacity_j >= 10) & (pop.battery_capacity_j <= 100))
    assert np.all(pop.buffer_capacity == 10)
    p = pop.profile(3)
    assert p.id == 3 and p.buffer_capacity == 10


def test_small_override_shares():
    pop = spawn_scenario("smart_city", rng(), num_devices=4, class_shares=(0.25, 0.5, 0.25))
    assert list(pop.counts().values()) == [1, 2, 1]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.lists(st.integers(0, 20), min_size=3, max_size=3).filter(lambda v: sum(v) > 0))
def test_largest_remainder_properties(total, raw):
    shares = np.array(raw, dtype=float) / sum(raw)
    counts = largest_remainder(total, shares)
    assert counts.sum() == total
    assert np.all(np.abs(counts - total * shares) < 1.0)


def test_spawn_rejects_bad_input():
    with pytest.raises(ValueError):
        spawn_scenario("smart_city", rng(), num_devices=0)
    with pytest.raises(ValueError):
        spawn_scenario("moon_base", rng())
    with pytest.raises(ValueError):
        spawn_scenario("smart_city", rng(), class_shares=(0.5, 0.6, 0.1))


def test_population_csv(tmp_path):
    pop = spawn_scenario("smart_city", rng(), num_devices=5)
    path = tmp_path / "pop.csv"
    pop.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "id,class,x,y,power_dbm,battery_j"
    assert len(lines) == 6


def one_device(kind, buffer_capacity=10, seed=0):
    shares = [0.0, 0.0, 0.0]
    shares[kind] = 1.0
    pop = spawn_scenario("sensor_network", rng(seed), num_devices=1, class_shares=shares,
                         buffer_capacity=buffer_capacity)
    return pop


def test_empty_buffer_without_arrival_is_idle():
    pop = one_device(DeviceClass.PERIODIC)
    # no forced status packet: turn the fallback off for this device class
    from dataclasses import replace
    pop.class_params[DeviceClass.PERIODIC] = replace(pop.class_params[DeviceClass.PERIODIC], forced_activity=False)
    state = DeviceState.fresh(pop, np.array([10**9]))
    r = rng(3)
    for t in range(200):
        step_traffic(state, pop, t, r)
        assert not state.active[0]
        assert state.buffer[0] == 0


@pytest.mark.parametrize("kind,duty", [(DeviceClass.CRITICAL, 0.10), (DeviceClass.PERIODIC, 0.01)])
def test_long_run_activity_matches_duty_cycle(kind, duty):
    pop = spawn_scenario("sensor_network", rng(0), num_devices=20,
                         class_shares=[1.0 if k == kind else 0.0 for k in range(3)])
    state = DeviceState.fresh(pop, initial_periodic_offsets(pop, 1e-3, rng(1)))
    r = rng(2)
    steps = 100_000 // 20 * 5
    hits = 0
    for t in range(steps):
        step_traffic(state, pop, t, r)
        hits += int(state.active.sum())
        state.buffer[state.active] -= 1
    rate = hits / (steps * pop.size)
    assert rate == pytest.approx(duty, rel=0.1)


def test_critical_activity_single_device_1e5_steps():
    pop = one_device(DeviceClass.CRITICAL)
    state = DeviceState.fresh(pop, np.array([np.iinfo(np.int64).max]))
    r = rng(9)
    hits = 0
    for t in range(100_000):
        step_traffic(state, pop, t, r)
        hits += int(state.active[0])
        state.buffer[state.active] -= 1
    assert hits / 100_000 == pytest.approx(0.10, abs=0.01)


def test_full_buffer_drops_arrival():
    pop = one_device(DeviceClass.PERIODIC, buffer_capacity=3)
    state = DeviceState.fresh(pop, np.array([0]))
    state.buffer[:] = 3
    step_traffic(state, pop, 0, rng(0))  # periodic deadline due at t=0
    assert state.buffer[0] == 3
    assert state.drops[0] == 1


def test_periodic_one_hz():
    pop = one_device(DeviceClass.PERIODIC, buffer_capacity=10_000)
    from dataclasses import replace
    pop.class_params[DeviceClass.PERIODIC] = replace(pop.class_params[DeviceClass.PERIODIC], forced_activity=False)
    state = DeviceState.fresh(pop, np.array([5]))
    r = rng(0)
    arrivals = 0
    for t in range(5000):
        before = state.buffer[0]
        step_traffic(state, pop, t, r)
        arrivals += state.buffer[0] - before
        state.buffer[state.active] -= 1
    assert arrivals == 5  # t = 5, 1005, 2005, 3005, 4005


def test_buffer_and_drops_invariants():
    pop = spawn_scenario("smart_city", rng(4), num_devices=30, buffer_capacity=2)
    state = DeviceState.fresh(pop, initial_periodic_offsets(pop, 1e-3, rng(5)))
    r = rng(6)
    prev = state.drops.copy()
    for t in range(3000):
        step_traffic(state, pop, t, r)
        assert np.all(state.buffer <= pop.buffer_capacity) and np.all(state.buffer >= 0)
        assert np.all(state.drops >= prev)
        assert np.all(~state.active | (state.buffer > 0))
        prev = state.drops.copy()


def test_energy_drain_23dbm():
    pop = one_device(DeviceClass.CRITICAL)
    state = DeviceState.fresh(pop, np.array([0]))
    e0 = state.energy[0]
    state.active[:] = True
    update_energy(state, np.array([True]), np.array([23.0]), 1e-3)
    assert e0 - state.energy[0] == pytest.approx(1.995e-4, rel=1e-3)


def test_energy_unchanged_when_idle_and_floored():
    pop = one_device(DeviceClass.CRITICAL)
    state = DeviceState.fresh(pop, np.array([0]))
    e0 = state.energy.copy()
    update_energy(state, np.array([False]), np.array([23.0]), 1e-3)
    assert np.array_equal(state.energy, e0)

    state.energy[:] = 1e-5
    state.active[:] = True
    update_energy(state, np.array([True]), np.array([23.0]), 1e-3)
    assert state.energy[0] == 0.0
    assert not state.active[0]
    # a dead device stays silent
    r = rng(0)
    for t in range(500):
        step_traffic(state, pop, t, r)
        assert not state.active[0]
    with pytest.raises(ValueError):
        update_energy(state, np.array([True]), np.array([23.0]), 0.0)


def test_energy_non_increasing():
    pop = spawn_scenario("smart_city", rng(7), num_devices=25)
    state = DeviceState.fresh(pop, initial_periodic_offsets(pop, 1e-3, rng(8)))
    r = rng(9)
    for t in range(500):
        step_traffic(state, pop, t, r)
        before = state.energy.copy()
        update_energy(state, state.active, pop.tx_power_dbm, 1e-3)
        assert np.all(state.energy <= before)
        assert np.all(state.energy >= 0)
