"""Per-episode metric accumulation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .env import NomaEnv, RewardBreakdown, StepInfo

COMPONENTS = ("throughput", "energy", "reliability", "interference", "fairness")
METRICS = (
    "throughput_mbps",
    "energy_efficiency_bpj",
    "energy_component",
    "critical_reliability",
    "fairness",
    "interference",
)


@dataclass
class EpisodeMetrics:
    mean_throughput_mbps: float
    energy_efficiency_bpj: float
    energy_component: float
    critical_reliability: float
    fairness: float
    interference: float
    combined_reward: float

    def as_dict(self):
        return asdict(self)


class EpisodeAccumulator:
    def __init__(self, env: NomaEnv):
        self.env = env
        self.critical = env.population.is_critical
        self.steps = 0
        self.reward = 0.0
        self.components = dict.fromkeys(COMPONENTS, 0.0)
        self.thr_mbps = 0.0
        self.bits = 0.0
        self.joules = 0.0
        self.crit_hits = 0
        self.fairness = 0.0
        self.interference = 0.0
        self.energy_component = 0.0
        self.sinr_db_sum = 0.0
        self.active_sum = 0

    def add(self, reward: RewardBreakdown, sinr, info: StepInfo) -> None:
        dt = self.env.config.step_duration_s
        self.steps += 1
        self.reward += reward.combined
        for k, v in reward.components().items():
            self.components[k] += v
        self.thr_mbps += float(info.rates_bps.mean()) / 1e6
        self.bits += float(info.rates_bps.sum()) * dt
        self.joules += float(info.energy_used_j.sum())
        self.crit_hits += int(np.sum(info.meets_threshold & self.critical))
        self.fairness += reward.fairness
        self.interference += reward.interference
        self.energy_component += reward.energy
        act = info.active
        self.active_sum += int(act.sum())
        if act.any():
            self.sinr_db_sum += float(np.mean(10 * np.log10(np.maximum(sinr[act], 1e-30))))

    def result(self) -> EpisodeMetrics:
        s = max(self.steps, 1)
        n_crit = int(self.critical.sum())
        return EpisodeMetrics(
            mean_throughput_mbps=self.thr_mbps / s,
            energy_efficiency_bpj=self.bits / self.joules if self.joules > 0 else 0.0,
            energy_component=self.energy_component / s,
            critical_reliability=self.crit_hits / (n_crit * s) if n_crit else 0.0,
            fairness=self.fairness / s,
            interference=self.interference / s,
            combined_reward=self.reward,
        )


def run_episode(env: NomaEnv, agent, trace=None, episode: int = 0):
    """Play one episode; returns (metrics, component totals, agent diagnostics)."""
    obs = env.reset()
    acc = EpisodeAccumulator(env)
    done = False
    step = 0
    while not done:
        codes = agent.act(obs)
        next_obs, reward, sinr, done = env.step(codes)
        agent.observe(obs, codes, reward, next_obs, done)
        acc.add(reward, sinr, env.last_info)
        if trace is not None:
            act = env.last_info.active
            mean_db = float(np.mean(10 * np.log10(np.maximum(sinr[act], 1e-30)))) if act.any() else float("nan")
            trace.append((episode, step, reward.combined, *reward.components().values(), mean_db, int(act.sum())))
        obs = next_obs
        step += 1
    diag = agent.end_episode(episode)
    return acc.result(), dict(acc.components), diag
