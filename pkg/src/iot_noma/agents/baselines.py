"""Static, random and greedy-SINR code assignment.

Code indices are zero-based throughout (``0 .. C-1``).
"""

from __future__ import annotations

import numpy as np

from ..env import NetworkObservation


def static_assign(num_devices: int, num_codes: int) -> np.ndarray:
    return np.arange(num_devices, dtype=np.int64) % num_codes


def random_assign(num_devices: int, num_codes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, num_codes, size=num_devices, dtype=np.int64)


def greedy_sinr_assign(obs: NetworkObservation, rho, powers_mw=None, gains=None, beta=None) -> np.ndarray:
    """Strongest active devices pick first, each taking its least-interfered code.

    Incremental interference for device i on code c is
    ``sum_j rho[c, a_j] * P_j |h_j|^2 * beta[i, j]`` over already-placed active
    devices. Ties go to the lowest code. Idle devices then cycle through the
    codes active devices left unused (all codes if none are left).
    """
    rho = np.asarray(rho, dtype=float)
    n, c = obs.num_devices, rho.shape[0]
    p = obs.tx_power_mw if powers_mw is None else np.asarray(powers_mw, dtype=float)
    g = obs.gains_linear if gains is None else np.asarray(gains, dtype=float)
    rx = p * g
    active = np.asarray(obs.activity, dtype=bool)

    codes = np.full(n, -1, dtype=np.int64)
    order = sorted(np.nonzero(active)[0], key=lambda i: (-rx[i], i))
    placed = []
    for i in order:
        if placed:
            pj = np.array(placed)
            coupling = rx[pj] if beta is None else rx[pj] * np.asarray(beta)[i, pj]
            cost = rho[:, codes[pj]] @ coupling
        else:
            cost = np.zeros(c)
        codes[i] = int(np.argmin(cost))
        placed.append(i)

    used = set(codes[active].tolist())
    leftovers = [k for k in range(c) if k not in used] or list(range(c))
    idle = np.nonzero(~active)[0]
    codes[idle] = np.array(leftovers, dtype=np.int64)[np.arange(idle.size) % len(leftovers)]
    return codes


class StaticAgent:
    kind = "static"

    def __init__(self, num_devices: int, num_codes: int):
        self.codes = static_assign(num_devices, num_codes)

    def act(self, obs):
        return self.codes.copy()

    def observe(self, *args, **kwargs):
        pass

    def end_episode(self, episode: int) -> dict:
        return {}

    def checkpoint(self) -> dict:
        return {"codes": self.codes}


class RandomAgent:
    kind = "random"

    def __init__(self, num_devices: int, num_codes: int, rng: np.random.Generator):
        self.n, self.c, self.rng = num_devices, num_codes, rng

    def act(self, obs):
        return random_assign(self.n, self.c, self.rng)

    def observe(self, *args, **kwargs):
        pass

    def end_episode(self, episode: int) -> dict:
        return {}

    def checkpoint(self) -> dict:
        return {}


class GreedyAgent:
    kind = "greedy"

    def __init__(self, rho, beta=None):
        self.rho = np.asarray(rho)
        self.beta = beta

    def act(self, obs):
        return greedy_sinr_assign(obs, self.rho, beta=self.beta)

    def observe(self, *args, **kwargs):
        pass

    def end_episode(self, episode: int) -> dict:
        return {}

    def checkpoint(self) -> dict:
        return {}
