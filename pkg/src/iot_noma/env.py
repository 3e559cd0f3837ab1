"""The code-assignment MDP: observations, joint actions, multi-objective reward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .devices import (
    DEFAULT_CLASSES,
    DEFAULT_SHARES,
    DeviceClass,
    DeviceState,
    Population,
    initial_periodic_offsets,
    spawn_scenario,
    step_traffic,
    update_energy,
)
from .gold_codes import Codebook
from .rng import SeedStreams
from .stats import jain


@dataclass(frozen=True)
class RewardWeights:
    throughput: float = 1.0
    energy: float = 0.5
    reliability: float = 2.0
    interference: float = 0.5
    fairness: float = 1.0


@dataclass
class RewardBreakdown:
    throughput: float
    energy: float
    reliability: float
    interference: float
    fairness: float
    weights: RewardWeights
    per_device: np.ndarray | None = field(default=None, repr=False)

    @property
    def combined(self) -> float:
        w = self.weights
        return (
            w.throughput * self.throughput
            + w.energy * self.energy
            + w.reliability * self.reliability
            - w.interference * self.interference
            + w.fairness * self.fairness
        )

    def components(self) -> dict[str, float]:
        return {
            "throughput": self.throughput,
            "energy": self.energy,
            "reliability": self.reliability,
            "interference": self.interference,
            "fairness": self.fairness,
        }


def reward_throughput(sinrs, weights, active) -> float:
    sinrs = np.asarray(sinrs, dtype=float)
    if np.any(sinrs < 0):
        raise ValueError("SINR must be non-negative")
    a = np.asarray(active, dtype=bool)
    return float(np.sum(np.asarray(weights, dtype=float)[a] * np.log2(1.0 + sinrs[a])))


def reward_energy(powers_w, active, energies_j, eps_small: float = 1e-6) -> float:
    a = np.asarray(active, dtype=float)
    return float(-np.sum(np.asarray(powers_w) * a / (np.asarray(energies_j) + eps_small)))


def reward_reliability(sinrs, is_critical, thresholds, active=None) -> int:
    """Critical devices meeting their linear SINR threshold (inclusive)."""
    ok = np.asarray(is_critical, dtype=bool) & (np.asarray(sinrs) >= np.asarray(thresholds))
    if active is not None:
        ok &= np.asarray(active, dtype=bool)
    return int(np.sum(ok))


def interference_received(codes, gains, active, rho) -> np.ndarray:
    """Per-receiver term sum_{j != i} rho[a_i, a_j] |h_j|^2 A_j, zero for idle receivers."""
    codes = np.asarray(codes)
    a = np.asarray(active, dtype=bool)
    coupling = np.asarray(rho)[codes[:, None], codes[None, :]]
    np.fill_diagonal(coupling, 0.0)
    return np.where(a, coupling @ np.where(a, np.asarray(gains, dtype=float), 0.0), 0.0)


def reward_interference(codes, gains, active, rho) -> float:
    return float(np.sum(interference_received(codes, gains, active, rho)))


def reward_fairness(throughputs) -> float:
    """Jain index over the served throughput of active devices."""
    return jain(throughputs)


@dataclass
class NetworkObservation:
    channel_gains: np.ndarray  # |h|^2 / sigma_h
    energies: np.ndarray  # E / E_max
    activity: np.ndarray  # bool
    buffers: np.ndarray  # Q / capacity
    # context for rule-based baselines and feature builders, not part of the MDP vector
    gains_linear: np.ndarray = field(repr=False, default=None)
    tx_power_mw: np.ndarray = field(repr=False, default=None)
    classes: np.ndarray = field(repr=False, default=None)

    @property
    def num_devices(self) -> int:
        return self.energies.size

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.channel_gains, self.energies, self.activity.astype(float), self.buffers]
        )


@dataclass
class StepInfo:
    rates_bps: np.ndarray
    served_packets: np.ndarray
    energy_used_j: np.ndarray
    meets_threshold: np.ndarray
    interference_mw: np.ndarray
    active: np.ndarray


@dataclass(frozen=True)
class EnvConfig:
    scenario: str = "smart_city"
    num_devices: int | None = None
    class_shares: tuple = DEFAULT_SHARES
    class_params: dict = field(default_factory=lambda: dict(DEFAULT_CLASSES))
    spawn_kwargs: dict = field(default_factory=dict)
    channel: ch.ChannelParams = field(default_factory=ch.ChannelParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    steps_per_episode: int = 100
    step_duration_s: float = 1e-3
    packet_bits: int = 1000
    eps_small: float = 1e-6
    class_beta: tuple | None = None  # 3x3 per-class sensitivity, default all ones


class NomaEnv:
    """One simulated cell. Population is fixed per seed; episodes redraw the channel."""

    def __init__(self, config: EnvConfig, codebook: Codebook, seed: int = 0):
        self.config = config
        self.codebook = codebook
        self._seed(seed)

    def _seed(self, seed: int) -> None:
        cfg = self.config
        self.seed = int(seed)
        self.streams = SeedStreams(seed)
        self.population: Population = spawn_scenario(
            cfg.scenario,
            self.streams("topology"),
            num_devices=cfg.num_devices,
            class_shares=cfg.class_shares,
            cell_radius=cfg.channel.cell_radius_m,
            class_params=cfg.class_params,
            **cfg.spawn_kwargs,
        )
        pop = self.population
        self.weights = pop.per_class("class_weight")
        self.thresholds = ch.db_to_linear(pop.per_class("sinr_req_db"))
        if cfg.class_beta is None:
            self.beta = None
        else:
            b = np.asarray(cfg.class_beta, dtype=float)
            self.beta = b[pop.classes[:, None], pop.classes[None, :]]
        self.episode = 0
        self.t = 0
        self.done = True

    @property
    def num_devices(self) -> int:
        return self.population.size

    @property
    def num_codes(self) -> int:
        return self.codebook.size

    def reset(self, seed: int | None = None) -> NetworkObservation:
        if seed is not None:
            self._seed(seed)
        cfg, pop = self.config, self.population
        ep = self.episode
        shadow_rng = self.streams("shadowing", ep)
        self._fading_rng = self.streams("fading", ep)
        self._traffic_rng = self.streams("traffic", ep)

        dist = pop.distances
        self.is_los = shadow_rng.random(pop.size) < ch.los_probability(dist)
        sigma = np.where(self.is_los, cfg.channel.shadow_sigma_los_db, cfg.channel.shadow_sigma_nlos_db)
        self.shadowing_db = ch.sample_shadowing(pop.positions, sigma, cfg.channel.shadow_corr_dist_m, shadow_rng)
        self.path_loss_db = ch.path_loss_db(dist, cfg.channel.carrier_freq_ghz, self.is_los)

        offsets = initial_periodic_offsets(pop, cfg.step_duration_s, self._traffic_rng)
        self.state = DeviceState.fresh(pop, offsets)
        self.t = 0
        self.done = False
        self._gain_n = 0
        self._gain_mean = 0.0
        self._gain_m2 = 0.0
        step_traffic(self.state, pop, self.t, self._traffic_rng, cfg.step_duration_s)
        self._draw_fading()
        self.episode += 1
        return self.observe()

    def _draw_fading(self) -> None:
        cfg = self.config
        self.fading = ch.sample_fading(self._fading_rng, self.is_los, cfg.channel.rician_k_db)
        self.gains = ch.compute_channel_gain(self.path_loss_db, self.shadowing_db, self.fading)
        # pooled running variance over every gain seen this episode
        g = self.gains
        nb, mb = g.size, float(g.mean())
        m2b = float(np.sum((g - mb) ** 2))
        n = self._gain_n + nb
        delta = mb - self._gain_mean
        self._gain_m2 += m2b + delta * delta * self._gain_n * nb / n
        self._gain_mean += delta * nb / n
        self._gain_n = n

    @property
    def sigma_h(self) -> float:
        if self._gain_n > 1 and self._gain_m2 > 0:
            return float(np.sqrt(self._gain_m2 / self._gain_n))
        return float(abs(self._gain_mean)) or 1.0

    def observe(self) -> NetworkObservation:
        pop, st = self.population, self.state
        return NetworkObservation(
            channel_gains=self.gains / self.sigma_h,
            energies=st.energy / pop.battery_capacity_j,
            activity=st.active.copy(),
            buffers=st.buffer / pop.buffer_capacity,
            gains_linear=self.gains.copy(),
            tx_power_mw=pop.tx_power_mw,
            classes=pop.classes,
        )

    def validate_action(self, codes) -> np.ndarray:
        a = np.asarray(codes)
        if a.shape != (self.num_devices,):
            raise ValueError(f"action must have shape ({self.num_devices},), got {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError(f"action must be integer code indices, got dtype {a.dtype}")
        if a.min() < 0 or a.max() >= self.num_codes:
            raise ValueError(f"code index out of range [0, {self.num_codes})")
        return a.astype(np.int64)

    def evaluate(self, codes) -> tuple[RewardBreakdown, np.ndarray, StepInfo]:
        """Reward and SINR of an assignment in the current state, without advancing."""
        cfg, pop, st = self.config, self.population, self.state
        codes = self.validate_action(codes)
        active = st.active
        p_mw = pop.tx_power_mw
        interf = ch.compute_interference(codes, active, p_mw, self.gains, self.codebook.rho, self.beta)
        sinr = ch.compute_sinr(active, p_mw, self.gains, interf, cfg.channel)
        rates = np.where(active, cfg.channel.bandwidth_hz * np.log2(1.0 + sinr), 0.0)
        meets = active & (sinr >= self.thresholds)

        w = cfg.reward
        p_w = pop.tx_power_w
        thr_i = np.where(active, self.weights * np.log2(1.0 + sinr), 0.0)
        en_i = -p_w * active / (st.energy + cfg.eps_small)
        rel_i = (meets & pop.is_critical).astype(float)
        int_i = interference_received(codes, self.gains, active, self.codebook.rho)
        fair = reward_fairness(rates[active])
        reward = RewardBreakdown(
            throughput=float(thr_i.sum()),
            energy=float(en_i.sum()),
            reliability=float(rel_i.sum()),
            interference=float(int_i.sum()),
            fairness=fair,
            weights=w,
            per_device=w.throughput * thr_i + w.energy * en_i + w.reliability * rel_i - w.interference * int_i,
        )
        info = StepInfo(
            rates_bps=rates,
            served_packets=np.zeros(pop.size, dtype=np.int64),
            energy_used_j=active * p_w * cfg.step_duration_s,
            meets_threshold=meets,
            interference_mw=interf,
            active=active.copy(),
        )
        return reward, sinr, info

    def step(self, codes):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        cfg, pop, st = self.config, self.population, self.state
        reward, sinr, info = self.evaluate(codes)

        deliverable = np.floor(info.rates_bps * cfg.step_duration_s / cfg.packet_bits).astype(np.int64)
        served = np.where(info.meets_threshold, np.minimum(st.buffer, deliverable), 0)
        st.buffer = st.buffer - served
        info.served_packets = served
        update_energy(st, info.active, pop.tx_power_dbm, cfg.step_duration_s)

        self.t += 1
        self.done = self.t >= cfg.steps_per_episode
        if not self.done:
            step_traffic(st, pop, self.t, self._traffic_rng, cfg.step_duration_s)
            self._draw_fading()
        self.last_info = info
        return self.observe(), reward, sinr, self.done


def critical_mask(classes) -> np.ndarray:
    return np.asarray(classes) == DeviceClass.CRITICAL
