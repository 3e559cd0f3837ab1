"""DDPG over a continuous code embedding.

The actor emits one d-dimensional proto-action per device; each is snapped to
the nearest codebook vector. The critic scores (state, proto-actions) pairs on
the combined reward.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..env import NetworkObservation, RewardBreakdown
from ..gold_codes import Codebook
from ..nn import Adam, DenseNet, soft_update
from .embedding import EmbeddingCodebook, hard_quantize, init_embedding_codebook, quantization_loss
from .replay import PrioritizedReplay

log = logging.getLogger(__name__)


@dataclass
class DdpgConfig:
    embed_dim: int = 16
    hidden: int = 128
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.95
    tau: float = 0.005
    quant_coef: float = 0.1
    noise_sigma: float = 0.2
    noise_decay: float = 0.999
    noise_class_scale: tuple = (0.5, 1.0, 1.5)  # critical, periodic, best-effort
    class_weights: tuple = (1.75, 1.0, 1.0)
    batch_size: int = 64
    buffer_capacity: int = 1_000_000
    replay_alpha: float = 0.6
    replay_eps: float = 1e-3
    beta_start: float = 0.4
    beta_end: float = 1.0
    beta_anneal_episodes: int = 1000
    temperature: float = 0.1
    adaptive_codebook: bool = False
    codebook_lr: float = 1e-3
    updates_per_step: int = 1


def context_weights(obs: NetworkObservation, class_weights) -> tuple[float, float]:
    """(w_device, w_energy) of a transition from its active devices.

    w_device is the mean class weight of active devices, w_energy is
    ``1 + mean(1 - E/E_max)`` over them; both are 1 when nobody transmits.
    """
    act = np.asarray(obs.activity, dtype=bool)
    if not act.any():
        return 1.0, 1.0
    w = np.asarray(class_weights, dtype=float)[obs.classes[act]]
    return float(w.mean()), float(1.0 + np.mean(1.0 - obs.energies[act]))


def ddpg_act(actor: DenseNet, obs: NetworkObservation, vectors, sigma: float, class_scale, rng: np.random.Generator):
    """Noisy proto-actions (N, d) and their hard-quantized codes."""
    n = obs.num_devices
    d = vectors.shape[1]
    v = actor(obs.flatten()).reshape(n, d)
    noise = rng.standard_normal((n, d))
    if sigma > 0:
        scale = sigma * np.asarray(class_scale, dtype=float)[obs.classes]
        v = v + scale[:, None] * noise
    return v, hard_quantize(v, vectors)


class DdpgAgent:
    kind = "ddpg"

    def __init__(self, codebook: Codebook, num_devices: int, config: DdpgConfig,
                 rng: np.random.Generator, init_rng: np.random.Generator | None = None,
                 replay_rng: np.random.Generator | None = None):
        self.cfg = config
        init_rng = init_rng if init_rng is not None else np.random.default_rng(0)
        self.n = num_devices
        self.embedding: EmbeddingCodebook = init_embedding_codebook(
            codebook.rho, config.embed_dim, rng=init_rng, temperature=config.temperature,
            adaptive=config.adaptive_codebook,
        )
        s_dim = 4 * num_devices
        a_dim = num_devices * config.embed_dim
        h = config.hidden
        self.actor = DenseNet([s_dim, h, h, a_dim], ["relu", "relu", "tanh"], init_rng)
        self.critic = DenseNet([s_dim + a_dim, h, h, 1], ["relu", "relu", "identity"], init_rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, config.actor_lr)
        self.critic_opt = Adam(self.critic.params, config.critic_lr)
        self.buffer = PrioritizedReplay(config.buffer_capacity, config.replay_alpha, config.replay_eps,
                                        config.beta_start, config.beta_end)
        self.rng = rng  # exploration noise
        self.replay_rng = replay_rng if replay_rng is not None else rng
        self.sigma = config.noise_sigma
        self.episode = 0
        self.degenerate = False
        self.diagnostics: list[dict] = []
        self._last_v = None
        self._stats = {"critic_loss": 0.0, "actor_q": 0.0, "quant_loss": 0.0, "updates": 0}

    @property
    def vectors(self) -> np.ndarray:
        return self.embedding.vectors

    def act(self, obs: NetworkObservation) -> np.ndarray:
        v, codes = ddpg_act(self.actor, obs, self.vectors, self.sigma, self.cfg.noise_class_scale, self.rng)
        self._last_v = v
        return codes

    def observe(self, obs, codes, reward: RewardBreakdown, next_obs, done: bool) -> None:
        w_dev, w_en = context_weights(obs, self.cfg.class_weights)
        self.buffer.add(obs.flatten(), self._last_v.ravel(), np.asarray(codes), reward.combined,
                        next_obs.flatten(), done, w_dev, w_en)
        if self.degenerate or len(self.buffer) < self.cfg.batch_size:
            return
        for _ in range(self.cfg.updates_per_step):
            ddpg_train_step(self)

    def end_episode(self, episode: int) -> dict:
        self.episode = episode + 1
        self.sigma *= self.cfg.noise_decay
        s = self._stats
        k = max(s["updates"], 1)
        out = {
            "critic_loss": s["critic_loss"] / k,
            "actor_q": s["actor_q"] / k,
            "quant_loss": s["quant_loss"] / k,
            "updates": s["updates"],
            "sigma": self.sigma,
            "degenerate": self.degenerate,
        }
        self._stats = {"critic_loss": 0.0, "actor_q": 0.0, "quant_loss": 0.0, "updates": 0}
        return out

    def checkpoint(self) -> dict:
        return {
            "actor": self.actor.to_bytes(),
            "critic": self.critic.to_bytes(),
            "codebook": self.vectors,
        }


def ddpg_train_step(agent: DdpgAgent, batch=None) -> dict | None:
    """One critic/actor update from a prioritized batch.

    ``batch`` may be given as (indices, entries, IS weights) for testing; it is
    drawn from the agent's buffer otherwise. Returns None when the step was
    aborted on a non-finite loss (the agent is then flagged degenerate).
    """
    cfg = agent.cfg
    if batch is None:
        beta = agent.buffer.beta(agent.episode / max(cfg.beta_anneal_episodes, 1))
        batch = agent.buffer.sample(cfg.batch_size, agent.replay_rng, beta)
    idx, entries, isw = batch
    b = len(entries)
    s = np.stack([e.obs for e in entries])
    a = np.stack([e.action for e in entries])
    r = np.array([e.reward for e in entries])
    s2 = np.stack([e.next_obs for e in entries])
    done = np.array([e.done for e in entries], dtype=float)

    a2 = agent.actor_target(s2)
    q2 = agent.critic_target(np.concatenate([s2, a2], axis=1))[:, 0]
    y = r + cfg.gamma * (1.0 - done) * q2

    q, c_cache = agent.critic.forward(np.concatenate([s, a], axis=1))
    td = q[:, 0] - y
    critic_loss = float(np.mean(isw * td * td))

    mu, a_cache = agent.actor.forward(s)
    v = mu.reshape(b, agent.n, cfg.embed_dim)
    qloss, qgrad, nearest = quantization_loss(v, agent.vectors)
    q_pi, p_cache = agent.critic.forward(np.concatenate([s, mu], axis=1))
    actor_loss = float(-q_pi.mean() + cfg.quant_coef * qloss.mean())

    if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
        agent.degenerate = True
        diag = {"episode": agent.episode, "critic_loss": critic_loss, "actor_loss": actor_loss,
                "max_abs_q": float(np.nanmax(np.abs(q))) if np.isfinite(q).any() else float("nan")}
        agent.diagnostics.append(diag)
        log.error("non-finite DDPG loss, step aborted: %s", diag)
        return None

    c_grads, _ = agent.critic.backward(c_cache, (2.0 * isw * td / b)[:, None])
    # dQ/da through the current critic, before it moves
    _, g_in = agent.critic.backward(p_cache, np.full((b, 1), -1.0 / b))
    g_mu = g_in[:, s.shape[1]:] + cfg.quant_coef * qgrad.reshape(b, -1) / b
    a_grads, _ = agent.actor.backward(a_cache, g_mu)

    agent.critic_opt.step(agent.critic.params, c_grads)
    agent.actor_opt.step(agent.actor.params, a_grads)

    if agent.embedding.adaptive:
        # d L_quant / d c_j = -sum over devices snapped to j of qgrad
        g_codes = np.zeros_like(agent.vectors)
        np.add.at(g_codes, nearest.ravel(), -qgrad.reshape(-1, cfg.embed_dim) / b)
        agent.embedding.vectors = agent.vectors - cfg.codebook_lr * g_codes

    soft_update(agent.actor_target, agent.actor, cfg.tau)
    soft_update(agent.critic_target, agent.critic, cfg.tau)
    agent.buffer.update_priorities(idx, td)

    st = agent._stats
    st["critic_loss"] += critic_loss
    st["actor_q"] += float(q_pi.mean())
    st["quant_loss"] += float(qloss.mean())
    st["updates"] += 1
    return {"critic_loss": critic_loss, "actor_loss": actor_loss, "td": td}
