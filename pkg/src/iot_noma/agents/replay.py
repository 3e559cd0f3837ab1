"""Prioritized experience replay with device-context weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ReplayEntry:
    obs: np.ndarray
    action: np.ndarray  # (N, d) continuous proto-actions
    codes: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    priority: float
    w_device: float = 1.0
    w_energy: float = 1.0


class PrioritizedReplay:
    """Ring buffer sampled with P(i) proportional to priority_i.

    Stored priority already folds in the context weights:
    ``(|delta| + eps)**alpha * w_device * w_energy``. Storage grows lazily, so
    a large capacity costs nothing until it is used. When full, the oldest
    entry is overwritten.
    """

    def __init__(self, capacity: int = 1_000_000, alpha: float = 0.6, eps: float = 1e-3,
                 beta_start: float = 0.4, beta_end: float = 1.0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = alpha
        self.eps = eps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self._entries: list[ReplayEntry] = []
        self._prio = np.zeros(min(self.capacity, 1024))
        self._next = 0
        self._max_raw = 1.0

    def __len__(self) -> int:
        return len(self._entries)

    def priority(self, td_error, w_device=1.0, w_energy=1.0):
        return (np.abs(td_error) + self.eps) ** self.alpha * w_device * w_energy

    def add(self, obs, action, codes, reward, next_obs, done, w_device=1.0, w_energy=1.0, td_error=None) -> int:
        """Insert a transition; new entries get the largest TD error seen so far."""
        raw = self._max_raw if td_error is None else abs(float(td_error))
        p = float(self.priority(raw, w_device, w_energy))
        entry = ReplayEntry(obs, action, codes, float(reward), next_obs, bool(done), p, w_device, w_energy)
        if len(self._entries) < self.capacity:
            idx = len(self._entries)
            self._entries.append(entry)
            if idx >= self._prio.size:
                grown = np.zeros(min(self.capacity, 2 * self._prio.size))
                grown[: self._prio.size] = self._prio
                self._prio = grown
        else:
            idx = self._next
            self._entries[idx] = entry
        self._prio[idx] = p
        self._next = (idx + 1) % self.capacity
        return idx

    def beta(self, progress: float) -> float:
        """Importance-sampling exponent annealed linearly over ``progress`` in [0, 1]."""
        f = min(max(progress, 0.0), 1.0)
        return self.beta_start + f * (self.beta_end - self.beta_start)

    def probabilities(self) -> np.ndarray:
        p = self._prio[: len(self)]
        return p / p.sum()

    def sample(self, batch: int, rng: np.random.Generator, beta: float = 0.4):
        """Draw ``batch`` indices with replacement; returns (indices, entries, IS weights)."""
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty buffer")
        probs = self.probabilities()
        idx = rng.choice(n, size=batch, p=probs)
        w = (n * probs[idx]) ** (-beta)
        w /= w.max()
        return idx, [self._entries[i] for i in idx], w

    def update_priorities(self, indices, td_errors) -> None:
        td = np.abs(np.asarray(td_errors, dtype=float))
        for i, d in zip(indices, td):
            e = self._entries[i]
            e.priority = float(self.priority(d, e.w_device, e.w_energy))
            self._prio[i] = e.priority
        if td.size:
            self._max_raw = max(self._max_raw, float(td.max()))


def prioritized_sample(buffer: PrioritizedReplay, batch: int, rng: np.random.Generator, beta: float = 0.4):
    return buffer.sample(batch, rng, beta)
