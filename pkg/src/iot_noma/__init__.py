"""Link-level simulator for code-domain NOMA in dense IoT deployments.

Reinforcement-learning agents (natural policy gradient, and DDPG over a
continuous code embedding) assign Gold spreading codes to heterogeneous
devices; static, random and greedy-SINR assignment serve as baselines.
"""

__version__ = "0.1.0"
