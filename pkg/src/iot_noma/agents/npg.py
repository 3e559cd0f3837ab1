"""Natural policy gradient over a factorized softmax code policy.

Each device i draws its code from ``softmax_c(phi(s, i, c) . theta_i)``. The
feature vector is laid out as::

    [one_hot(c) (C) | |h_i|^2/sigma_h | E_i/E_max | critical | A_i | rho_avg(c) | class_emb (4)]

Only the one-hot block and rho_avg depend on c, so the remaining slots shift
every logit of a device equally and cancel in the softmax. Their score
components, and hence their gradients and Fisher rows, are identically zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..devices import DeviceClass
from ..env import NetworkObservation, RewardBreakdown
from ..gold_codes import Codebook

log = logging.getLogger(__name__)

N_STATE_SLOTS = 4  # gain, energy, critical flag, activity
CLASS_EMBED_DIM = 4


@dataclass
class NpgConfig:
    lr_base: float = 0.001
    energy_lr_coef: float = 0.5
    class_weights: tuple = (1.75, 1.0, 1.0)  # critical, periodic, best-effort
    damping: float = 1e-3
    cg_iters: int = 15
    cg_tol: float = 1e-6
    gamma: float = 0.95
    baseline_decay: float = 0.9
    advantage: str = "joint"  # or "device"
    advantage_gamma: float | None = None  # discount inside the advantage; None -> gamma
    baseline: str = "ema"  # or "linear" (device advantage only)
    class_shared: bool = False
    episodes_per_update: int = 1

    def __post_init__(self):
        if not 10 <= self.cg_iters <= 20:
            raise ValueError("cg_iters must lie in [10, 20]")
        if self.advantage not in ("joint", "device"):
            raise ValueError(f"unknown advantage estimator {self.advantage!r}")
        if self.baseline not in ("ema", "linear"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.baseline == "linear" and self.advantage != "device":
            raise ValueError("the linear baseline needs the per-device advantage")

    @property
    def adv_gamma(self) -> float:
        return self.gamma if self.advantage_gamma is None else self.advantage_gamma


def feature_dim(num_codes: int) -> int:
    return num_codes + N_STATE_SLOTS + 1 + CLASS_EMBED_DIM


def rho_slot(num_codes: int) -> int:
    return num_codes + N_STATE_SLOTS


def npg_features(obs: NetworkObservation, i: int, c: int, rho_avg, class_embedding) -> np.ndarray:
    """Explicit feature vector phi(s, i, c)."""
    num_codes = len(rho_avg)
    phi = np.zeros(feature_dim(num_codes))
    phi[c] = 1.0
    k = num_codes
    phi[k] = obs.channel_gains[i]
    phi[k + 1] = obs.energies[i]
    phi[k + 2] = float(obs.classes[i] == DeviceClass.CRITICAL)
    phi[k + 3] = float(obs.activity[i])
    phi[k + 4] = rho_avg[c]
    phi[k + 5 :] = class_embedding[obs.classes[i]]
    return phi


def feature_tensor(obs: NetworkObservation, rho_avg, class_embedding, devices=None) -> np.ndarray:
    """phi for the listed devices and all codes, shape (len(devices), C, D)."""
    rho_avg = np.asarray(rho_avg, dtype=float)
    num_codes = rho_avg.size
    devices = np.arange(obs.num_devices) if devices is None else np.asarray(devices)
    m = devices.size
    phi = np.zeros((m, num_codes, feature_dim(num_codes)))
    phi[:, np.arange(num_codes), np.arange(num_codes)] = 1.0
    k = num_codes
    state = np.column_stack([
        obs.channel_gains[devices],
        obs.energies[devices],
        (obs.classes[devices] == DeviceClass.CRITICAL).astype(float),
        obs.activity[devices].astype(float),
    ])
    phi[:, :, k : k + 4] = state[:, None, :]
    phi[:, :, k + 4] = rho_avg[None, :]
    phi[:, :, k + 5 :] = np.asarray(class_embedding)[obs.classes[devices]][:, None, :]
    return phi


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def score_vectors(phi: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """grad_theta log pi(c) for every code: phi_c - E_pi[phi], shape (..., C, D)."""
    mean = np.einsum("...c,...cd->...d", probs, phi)
    return phi - mean[..., None, :]


def fisher_vector_product(phi: np.ndarray, probs: np.ndarray, x: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """Average over samples of Cov_pi(phi) @ x, plus damping * x.

    ``phi`` has shape (K, C, D) and ``probs`` (K, C); each sample contributes
    its exact expected outer product of score vectors.
    """
    px = phi @ x  # (K, C)
    mean = np.einsum("kc,kcd->kd", probs, phi)
    mx = mean @ x
    out = np.einsum("kc,kcd->d", probs * px, phi) - mean.T @ mx
    return out / phi.shape[0] + damping * x


def conjugate_gradient(matvec, b, max_iter: int = 15, tol: float = 1e-6):
    """Solve A x = b for symmetric positive-definite A given as a mat-vec.

    Returns (x, converged, relative_residual).
    """
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, True, 0.0
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for _ in range(max_iter):
        ap = matvec(p)
        denom = float(p @ ap)
        if denom <= 0:
            break
        step = rs / denom
        x += step * p
        r -= step * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) / bnorm < tol:
            return x, True, float(np.sqrt(rs_new) / bnorm)
        p = r + (rs_new / rs) * p
        rs = rs_new
    rel = float(np.linalg.norm(b - matvec(x)) / bnorm)
    return x, rel < tol, rel


def energy_lr(lr_base: float, coef: float, energy_fraction) -> np.ndarray:
    """Per-device step size growing linearly as the battery empties."""
    return lr_base * (1.0 + coef * (1.0 - np.asarray(energy_fraction, dtype=float)))


def discounted_to_go(rewards, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    out = np.empty_like(r)
    acc = np.zeros(r.shape[1:]) if r.ndim > 1 else 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def baseline_features(obs: NetworkObservation) -> np.ndarray:
    """Action-independent regressors per device, shape (N, 6)."""
    lg = np.log(np.maximum(obs.channel_gains, 1e-12))
    others = obs.activity.sum() - obs.activity.astype(float)
    return np.column_stack([np.ones_like(lg), lg, lg * lg, others, obs.energies, obs.buffers])


class LinearBaseline:
    """Per-class least-squares fit of reward-to-go on state regressors.

    Sufficient statistics decay geometrically between fits, so the baseline
    tracks the improving policy. Predictions use the fit from earlier
    episodes only.
    """

    def __init__(self, num_groups: int, dim: int, decay: float, ridge: float = 1e-3):
        self.decay = decay
        self.ridge = ridge
        self.xtx = np.zeros((num_groups, dim, dim))
        self.xty = np.zeros((num_groups, dim))
        self.w = np.zeros((num_groups, dim))
        self.seen = np.zeros(num_groups, dtype=bool)

    def predict(self, x, groups):
        return np.einsum("kd,kd->k", x, self.w[groups])

    def fit(self, x, y, groups) -> None:
        self.xtx *= self.decay
        self.xty *= self.decay
        np.add.at(self.xtx, groups, x[:, :, None] * x[:, None, :])
        np.add.at(self.xty, groups, x * y[:, None])
        dim = x.shape[1]
        for g in np.unique(groups):
            a = self.xtx[g] + self.ridge * np.eye(dim)
            self.w[g] = np.linalg.solve(a, self.xty[g])
            self.seen[g] = True


@dataclass
class NpgPolicy:
    theta: np.ndarray  # (num_groups, D)
    class_embedding: np.ndarray  # (3, 4), fixed
    rho_avg: np.ndarray
    group_of: np.ndarray  # device -> row of theta

    @property
    def num_codes(self) -> int:
        return self.rho_avg.size

    def probabilities(self, obs: NetworkObservation, devices=None) -> np.ndarray:
        devices = np.arange(obs.num_devices) if devices is None else np.asarray(devices)
        phi = feature_tensor(obs, self.rho_avg, self.class_embedding, devices)
        logits = np.einsum("mcd,md->mc", phi, self.theta[self.group_of[devices]])
        return softmax(logits)


def npg_sample(policy: NpgPolicy, obs: NetworkObservation, rng: np.random.Generator):
    """Independent categorical draw per device; returns (codes, log-probabilities)."""
    probs = policy.probabilities(obs)
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    codes = np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1).astype(np.int64)
    return codes, np.log(probs[np.arange(codes.size), codes])


class NpgAgent:
    kind = "npg"

    def __init__(self, codebook: Codebook, classes, config: NpgConfig, rng: np.random.Generator, init_rng=None):
        self.cfg = config
        self.classes = np.asarray(classes)
        n = self.classes.size
        d = feature_dim(codebook.size)
        init_rng = init_rng if init_rng is not None else np.random.default_rng(0)
        group_of = self.classes.copy() if config.class_shared else np.arange(n)
        groups = 3 if config.class_shared else n
        self.policy = NpgPolicy(
            theta=np.zeros((groups, d)),
            class_embedding=0.1 * init_rng.standard_normal((3, CLASS_EMBED_DIM)),
            rho_avg=codebook.rho_avg.copy(),
            group_of=group_of,
        )
        self.rng = rng
        self.class_w = np.asarray(config.class_weights, dtype=float)[self.classes]
        self.baseline = None
        self._device_baseline = np.zeros(n)
        self._device_baseline_seen = np.zeros(n, dtype=bool)
        self._linear = LinearBaseline(3, 6, config.baseline_decay)
        self._episodes = []
        self._reset_buffer()
        self.fallbacks = 0

    def _reset_buffer(self):
        self._obs, self._codes, self._rewards, self._dev_rewards = [], [], [], []

    def act(self, obs: NetworkObservation) -> np.ndarray:
        codes, _ = npg_sample(self.policy, obs, self.rng)
        return codes

    def observe(self, obs, codes, reward: RewardBreakdown, next_obs, done: bool) -> None:
        self._obs.append(obs)
        self._codes.append(np.asarray(codes))
        self._rewards.append(reward.combined)
        self._dev_rewards.append(reward.per_device if reward.per_device is not None else np.zeros(len(codes)))
        if done:
            self._episodes.append((self._obs, self._codes, np.array(self._rewards), np.array(self._dev_rewards), next_obs))
            self._reset_buffer()

    def _advantages(self, rewards, dev_rewards, activity, obs_list=None):
        """Advantage per (step, device), shape (T, N)."""
        cfg = self.cfg
        if cfg.advantage == "joint":
            g = discounted_to_go(rewards, cfg.adv_gamma)
            if self.baseline is None or self.baseline.shape != g.shape:
                self.baseline = g.copy()
                adv = np.zeros_like(g)
            else:
                adv = g - self.baseline
            self.baseline = cfg.baseline_decay * self.baseline + (1 - cfg.baseline_decay) * g
            return np.broadcast_to(adv[:, None], dev_rewards.shape)
        g = discounted_to_go(dev_rewards, cfg.adv_gamma)  # (T, N)
        adv = np.zeros_like(g)
        if cfg.baseline == "linear":
            t_idx, dev = np.nonzero(activity)
            if t_idx.size == 0:
                return adv
            feats = np.stack([baseline_features(o) for o in obs_list])[t_idx, dev]
            groups = self.classes[dev]
            target = g[t_idx, dev]
            pred = self._linear.predict(feats, groups)
            fresh = ~self._linear.seen[groups]
            if fresh.any():
                # first sight of a class: centre on the batch mean instead
                for c in np.unique(groups[fresh]):
                    sel = groups == c
                    pred[sel] = target[sel].mean()
            adv[t_idx, dev] = target - pred
            self._linear.fit(feats, target, groups)
            return adv
        for i in range(g.shape[1]):
            rows = np.nonzero(activity[:, i])[0]
            if rows.size == 0:
                continue
            if self._device_baseline_seen[i]:
                adv[rows, i] = g[rows, i] - self._device_baseline[i]
            else:
                self._device_baseline[i] = g[rows, i].mean()
                self._device_baseline_seen[i] = True
                adv[rows, i] = g[rows, i] - self._device_baseline[i]
                continue
            b = self._device_baseline[i]
            self._device_baseline[i] = cfg.baseline_decay * b + (1 - cfg.baseline_decay) * g[rows, i].mean()
        return adv

    def natural_gradient(self, phi, probs, actions, adv, weight):
        """Class-weighted score-function gradient and its CG-preconditioned direction."""
        k = phi.shape[0]
        chosen = phi[np.arange(k), actions]
        mean = np.einsum("kc,kcd->kd", probs, phi)
        score = chosen - mean
        grad = (weight * adv) @ score / k
        x, ok, res = conjugate_gradient(
            lambda v: fisher_vector_product(phi, probs, v, self.cfg.damping),
            grad, self.cfg.cg_iters, self.cfg.cg_tol,
        )
        return grad, x, ok, res

    def update(self) -> dict:
        cfg = self.cfg
        pol = self.policy
        samples = {g: [] for g in range(pol.theta.shape[0])}
        returns = []
        last_energy = None
        for obs_list, codes_list, rewards, dev_rewards, final_obs in self._episodes:
            activity = np.array([o.activity for o in obs_list])
            adv = self._advantages(rewards, dev_rewards, activity, obs_list)
            returns.append(float(rewards.sum()))
            for t, (obs, codes) in enumerate(zip(obs_list, codes_list)):
                act = np.nonzero(obs.activity)[0]
                if act.size == 0:
                    continue
                phi = feature_tensor(obs, pol.rho_avg, pol.class_embedding, act)
                probs = softmax(np.einsum("mcd,md->mc", phi, pol.theta[pol.group_of[act]]))
                for m, i in enumerate(act):
                    samples[pol.group_of[i]].append((phi[m], probs[m], codes[i], adv[t, i], self.class_w[i]))
            last_energy = final_obs.energies
        self._episodes = []

        energy_by_group = np.ones(pol.theta.shape[0])
        if last_energy is not None:
            if cfg.class_shared:
                for g in range(3):
                    sel = pol.group_of == g
                    energy_by_group[g] = last_energy[sel].mean() if sel.any() else 1.0
            else:
                energy_by_group = last_energy
        lrs = energy_lr(cfg.lr_base, cfg.energy_lr_coef, energy_by_group)

        updated = fallback = 0
        step_norm = 0.0
        for g, rows in samples.items():
            if not rows:
                continue
            phi = np.stack([r[0] for r in rows])
            probs = np.stack([r[1] for r in rows])
            actions = np.array([r[2] for r in rows])
            adv = np.array([r[3] for r in rows])
            weight = np.array([r[4] for r in rows])
            grad, x, ok, res = self.natural_gradient(phi, probs, actions, adv, weight)
            if not ok:
                log.debug("CG residual %.3g above tolerance for group %d; using plain gradient", res, g)
                x = grad
                fallback += 1
            pol.theta[g] += lrs[g] * x
            step_norm += float(np.sum((lrs[g] * x) ** 2))
            updated += 1
        self.fallbacks += fallback
        return {
            "updated_groups": updated,
            "cg_fallbacks": fallback,
            "step_norm": float(np.sqrt(step_norm)),
            "mean_return": float(np.mean(returns)) if returns else 0.0,
        }

    def end_episode(self, episode: int) -> dict:
        if len(self._episodes) >= self.cfg.episodes_per_update:
            return self.update()
        return {}

    def entropy(self, obs: NetworkObservation) -> float:
        p = self.policy.probabilities(obs)
        return float(-np.sum(p * np.log(np.clip(p, 1e-300, None)), axis=1).mean())

    def checkpoint(self) -> dict:
        return {"theta": self.policy.theta, "class_embedding": self.policy.class_embedding}
