"""Heterogeneous IoT device populations, traffic arrivals and battery drain."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .channel import dbm_to_watts


class DeviceClass(IntEnum):
    CRITICAL = 0
    PERIODIC = 1
    BEST_EFFORT = 2


@dataclass(frozen=True)
class ClassParams:
    duty_cycle: float
    reliability_target: float
    latency_limit_ms: float
    sinr_req_db: float
    class_weight: float
    event_rate_hz: float = 0.0  # Poisson arrivals
    periodic_rate_hz: float = 0.0
    forced_activity: bool = True  # transmit a status packet in a duty slot with an empty queue

    def __post_init__(self):
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError(f"duty_cycle must be in (0, 1], got {self.duty_cycle}")


DEFAULT_CLASSES = {
    DeviceClass.CRITICAL: ClassParams(
        duty_cycle=0.10, reliability_target=0.999, latency_limit_ms=100.0,
        sinr_req_db=7.0, class_weight=2.0, event_rate_hz=0.5,
    ),
    DeviceClass.PERIODIC: ClassParams(
        duty_cycle=0.01, reliability_target=0.97, latency_limit_ms=1000.0,
        sinr_req_db=3.0, class_weight=1.0, periodic_rate_hz=1.0,
    ),
    DeviceClass.BEST_EFFORT: ClassParams(
        duty_cycle=0.001, reliability_target=0.90, latency_limit_ms=1000.0,
        sinr_req_db=0.0, class_weight=0.5, event_rate_hz=0.5,
    ),
}

DEFAULT_SHARES = (0.2, 0.4, 0.4)

SCENARIO_SIZES = {"smart_city": 100, "industrial_iot": 60, "sensor_network": 150}


@dataclass
class Population:
    """Static per-device profile, stored column-wise."""

    classes: np.ndarray
    positions: np.ndarray  # (N, 2) metres, base station at the origin
    tx_power_dbm: np.ndarray
    battery_capacity_j: np.ndarray
    buffer_capacity: np.ndarray
    gops: np.ndarray
    class_params: dict = field(default_factory=lambda: dict(DEFAULT_CLASSES))

    @property
    def size(self) -> int:
        return self.classes.size

    @property
    def distances(self) -> np.ndarray:
        return np.maximum(np.linalg.norm(self.positions, axis=1), 1.0)

    @property
    def tx_power_w(self) -> np.ndarray:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def tx_power_mw(self) -> np.ndarray:
        return self.tx_power_w * 1000.0

    def per_class(self, attr: str) -> np.ndarray:
        table = np.array([getattr(self.class_params[c], attr) for c in DeviceClass])
        return table[self.classes]

    @property
    def is_critical(self) -> np.ndarray:
        return self.classes == DeviceClass.CRITICAL

    def counts(self) -> dict[DeviceClass, int]:
        return {c: int(np.sum(self.classes == c)) for c in DeviceClass}

    def profile(self, i: int) -> "DeviceProfile":
        return DeviceProfile(
            id=i,
            device_class=DeviceClass(int(self.classes[i])),
            position=(float(self.positions[i, 0]), float(self.positions[i, 1])),
            tx_power_dbm=float(self.tx_power_dbm[i]),
            battery_capacity_j=float(self.battery_capacity_j[i]),
            buffer_capacity=int(self.buffer_capacity[i]),
            gops=float(self.gops[i]),
        )

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "class", "x", "y", "power_dbm", "battery_j"])
            for i in range(self.size):
                w.writerow([
                    i, DeviceClass(int(self.classes[i])).name.lower(),
                    f"{self.positions[i, 0]:.17g}", f"{self.positions[i, 1]:.17g}",
                    f"{self.tx_power_dbm[i]:.17g}", f"{self.battery_capacity_j[i]:.17g}",
                ])


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    device_class: DeviceClass
    position: tuple[float, float]
    tx_power_dbm: float
    battery_capacity_j: float
    buffer_capacity: int
    gops: float  # carried, drives nothing


@dataclass
class DeviceState:
    energy: np.ndarray  # J
    buffer: np.ndarray  # packets
    active: np.ndarray  # bool
    next_periodic_deadline: np.ndarray  # step index
    drops: np.ndarray  # cumulative overflowed packets

    @classmethod
    def fresh(cls, population: Population, periodic_offsets: np.ndarray) -> "DeviceState":
        n = population.size
        return cls(
            energy=population.battery_capacity_j.astype(float).copy(),
            buffer=np.zeros(n, dtype=np.int64),
            active=np.zeros(n, dtype=bool),
            next_periodic_deadline=np.asarray(periodic_offsets, dtype=np.int64).copy(),
            drops=np.zeros(n, dtype=np.int64),
        )


def largest_remainder(total: int, shares) -> np.ndarray:
    """Split ``total`` into integer counts proportional to ``shares``."""
    shares = np.asarray(shares, dtype=float)
    if np.any(shares < 0) or not np.isclose(shares.sum(), 1.0):
        raise ValueError(f"class shares must be non-negative and sum to 1, got {shares.tolist()}")
    quota = total * shares
    counts = np.floor(quota).astype(int)
    order = sorted(range(len(shares)), key=lambda k: (-(quota[k] - counts[k]), k))
    for k in order[: total - counts.sum()]:
        counts[k] += 1
    return counts


def _inside(points, radius):
    r = np.linalg.norm(points, axis=1)
    return (r >= 1.0) & (r <= radius)


def _clustered(n, radius, rng, num_clusters, sigma):
    ang = rng.uniform(0.0, 2 * np.pi, num_clusters)
    rad = 0.7 * radius * np.sqrt(rng.uniform(0.0, 1.0, num_clusters))
    centers = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    which = np.arange(n) % num_clusters
    pts = centers[which] + sigma * rng.standard_normal((n, 2))
    bad = ~_inside(pts, radius)
    while bad.any():
        pts[bad] = centers[which[bad]] + sigma * rng.standard_normal((int(bad.sum()), 2))
        bad = ~_inside(pts, radius)
    return pts


def _grid(n, radius, rng, jitter):
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    side = 0.8 * radius * np.sqrt(2.0)  # corners at 0.8 R
    xs = (np.arange(cols) + 0.5) / cols * side - side / 2
    ys = (np.arange(rows) + 0.5) / rows * side - side / 2
    grid = np.array([(x, y) for y in ys for x in xs])[:n]
    pts = grid + jitter * rng.standard_normal((n, 2))
    r = np.linalg.norm(pts, axis=1, keepdims=True)
    # keep strictly inside the cell and outside the 1 m clamp radius
    pts = np.where(r > radius, pts * (radius / r), pts)
    pts = np.where(r < 1.0, pts + 1.0, pts)
    return pts


def _uniform_disk(n, radius, rng):
    r = np.sqrt(rng.uniform(1.0, radius**2, n))
    ang = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def spawn_scenario(
    kind: str,
    rng: np.random.Generator,
    num_devices: int | None = None,
    class_shares=DEFAULT_SHARES,
    cell_radius: float = 500.0,
    tx_power_range_dbm=(10.0, 23.0),
    battery_range_j=(10.0, 100.0),
    buffer_capacity: int = 10,
    gops_range=(1.0, 10.0),
    num_clusters: int = 5,
    cluster_sigma: float = 50.0,
    grid_jitter: float = 2.0,
    class_params: dict | None = None,
) -> Population:
    """Create a device population for one deployment scenario.

    ``smart_city`` places devices in Gaussian clusters, ``industrial_iot`` on a
    jittered grid and ``sensor_network`` uniformly over the cell. Class labels
    follow exact largest-remainder counts in a random order.
    """
    if kind not in SCENARIO_SIZES:
        raise ValueError(f"unknown scenario {kind!r}; expected one of {sorted(SCENARIO_SIZES)}")
    n = SCENARIO_SIZES[kind] if num_devices is None else int(num_devices)
    if n <= 0:
        raise ValueError(f"num_devices must be positive, got {n}")
    if buffer_capacity <= 0:
        raise ValueError("buffer_capacity must be positive")

    if kind == "smart_city":
        if num_clusters <= 0:
            raise ValueError("num_clusters must be positive")
        pos = _clustered(n, cell_radius, rng, num_clusters, cluster_sigma)
    elif kind == "industrial_iot":
        pos = _grid(n, cell_radius, rng, grid_jitter)
    else:
        pos = _uniform_disk(n, cell_radius, rng)

    counts = largest_remainder(n, class_shares)
    classes = rng.permutation(np.repeat(np.arange(len(counts)), counts))
    return Population(
        classes=classes.astype(np.int64),
        positions=pos,
        tx_power_dbm=rng.uniform(*tx_power_range_dbm, n),
        battery_capacity_j=rng.uniform(*battery_range_j, n),
        buffer_capacity=np.full(n, buffer_capacity, dtype=np.int64),
        gops=rng.uniform(*gops_range, n),
        class_params=dict(class_params or DEFAULT_CLASSES),
    )


def initial_periodic_offsets(population: Population, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Random phase (in steps) of each device's first periodic report."""
    rate = population.per_class("periodic_rate_hz")
    period = np.where(rate > 0, np.round(1.0 / np.where(rate > 0, rate, 1.0) / dt), 0).astype(np.int64)
    u = rng.random(population.size)
    offsets = np.floor(u * np.maximum(period, 1)).astype(np.int64)
    return np.where(period > 0, offsets, np.iinfo(np.int64).max)


def step_traffic(state: DeviceState, population: Population, t: int, rng: np.random.Generator, dt: float = 1e-3):
    """Enqueue arrivals for step ``t`` and decide who transmits.

    Random draws are made for every device regardless of class or state so
    the stream position depends only on the step count.
    """
    n = population.size
    events = rng.poisson(population.per_class("event_rate_hz") * dt)
    gate_u = rng.random(n)

    rate = population.per_class("periodic_rate_hz")
    period = np.where(rate > 0, np.round(1.0 / np.where(rate > 0, rate, 1.0) / dt), 0).astype(np.int64)
    due = (period > 0) & (t >= state.next_periodic_deadline)
    state.next_periodic_deadline = np.where(due, state.next_periodic_deadline + period, state.next_periodic_deadline)

    arrivals = events + due.astype(np.int64)
    space = population.buffer_capacity - state.buffer
    accepted = np.minimum(arrivals, space)
    state.drops = state.drops + (arrivals - accepted)
    state.buffer = state.buffer + accepted

    alive = state.energy > 0
    gate = gate_u < population.per_class("duty_cycle")
    forced = gate & alive & (state.buffer == 0) & population.per_class("forced_activity").astype(bool)
    state.buffer = state.buffer + forced
    state.active = gate & alive & (state.buffer > 0)
    return state


def update_energy(state: DeviceState, active, tx_power_dbm, dt: float = 1e-3):
    """Drain ``P * dt`` joules from transmitting devices; empty batteries go silent."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    drain = np.asarray(active, dtype=float) * dbm_to_watts(tx_power_dbm) * dt
    state.energy = np.maximum(0.0, state.energy - drain)
    state.active = np.asarray(state.active, dtype=bool) & (state.energy > 0)
    return state
