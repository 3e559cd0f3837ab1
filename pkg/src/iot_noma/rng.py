"""Named, independent random streams derived from one master seed.

Each consumer (topology, traffic, policy, ...) gets its own generator, keyed by
a stable hash of its name, so adding draws in one consumer never shifts the
numbers another consumer sees. Episode-scoped streams also mix in the episode
index, which keeps channel and traffic realizations identical across agents
that share a seed.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("topology", "shadowing", "fading", "traffic", "policy", "exploration", "replay", "init")


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(_key(name), *map(int, extra))))


class SeedStreams:
    def __init__(self, seed: int):
        self.seed = int(seed)

    def __call__(self, name: str, *extra: int) -> np.random.Generator:
        return stream(self.seed, name, *extra)
