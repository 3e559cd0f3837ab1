"""Code-assignment policies."""

from .baselines import GreedyAgent, RandomAgent, StaticAgent, greedy_sinr_assign, random_assign, static_assign
from .ddpg import DdpgAgent, DdpgConfig, ddpg_act, ddpg_train_step
from .embedding import EmbeddingCodebook, hard_quantize, init_embedding_codebook, soft_quantize
from .npg import NpgAgent, NpgConfig, NpgPolicy, npg_features, npg_sample
from .replay import PrioritizedReplay, ReplayEntry, prioritized_sample

__all__ = [
    "DdpgAgent", "DdpgConfig", "EmbeddingCodebook", "GreedyAgent", "NpgAgent", "NpgConfig", "NpgPolicy",
    "PrioritizedReplay", "RandomAgent", "ReplayEntry", "StaticAgent", "ddpg_act", "ddpg_train_step",
    "greedy_sinr_assign", "hard_quantize", "init_embedding_codebook", "npg_features", "npg_sample",
    "prioritized_sample", "random_assign", "soft_quantize", "static_assign",
]
