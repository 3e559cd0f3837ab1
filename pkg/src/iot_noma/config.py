"""Experiment configuration: JSON schema, validation, overrides and provenance."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .agents.ddpg import DdpgConfig
from .agents.npg import NpgConfig
from .channel import ChannelParams
from .env import RewardWeights

SCHEMA_VERSION = 1
AGENTS = ("static", "random", "greedy", "npg", "ddpg")
SCENARIOS = ("smart_city", "industrial_iot", "sensor_network")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    kind: str = "smart_city"
    num_devices: typing.Optional[int] = None  # None -> scenario default
    class_shares: tuple = (0.2, 0.4, 0.4)
    tx_power_range_dbm: tuple = (10.0, 23.0)
    battery_range_j: tuple = (10.0, 100.0)
    buffer_capacity: int = 10
    packet_bits: int = 1000


@dataclass
class CodebookConfig:
    degree: int = 7
    size: int = 80
    strategy: str = "greedy"
    max_misalignment: int = 2


@dataclass
class AgentConfig:
    kind: str = "npg"
    npg: NpgConfig = field(default_factory=NpgConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    episodes: int = 1000
    steps_per_episode: int = 100
    step_duration_s: float = 1e-3
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "runs"
    trace: bool = False

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# Values taken from the published setup; everything else is a local choice.
PUBLISHED_KEYS = {
    "codebook.degree", "codebook.size", "codebook.max_misalignment",
    "channel.carrier_freq_ghz", "channel.bandwidth_hz", "channel.noise_psd_dbm_hz",
    "channel.noise_figure_db", "channel.cell_radius_m", "channel.rician_k_db",
    "channel.shadow_sigma_los_db", "channel.shadow_sigma_nlos_db", "channel.processing_gain",
    "scenario.tx_power_range_dbm", "scenario.battery_range_j", "scenario.class_shares",
    "episodes", "steps_per_episode", "step_duration_s",
    "agent.npg.lr_base", "agent.npg.gamma",
    "agent.ddpg.actor_lr", "agent.ddpg.critic_lr", "agent.ddpg.gamma", "agent.ddpg.batch_size",
    "agent.ddpg.buffer_capacity", "agent.ddpg.embed_dim",
}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _coerce(value, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected object, got {type(value).__name__}")
        return _build(tp, value, key)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected bool, got {type(value).__name__}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected int, got {type(value).__name__}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected float, got {type(value).__name__}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected str, got {type(value).__name__}")
        return value
    if tp in (tuple, list) or origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected list, got {type(value).__name__}")
        return tuple(value) if (tp is tuple or origin is tuple) else list(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            where = f"{prefix}.{k}" if prefix else k
            raise ConfigError(f"unknown key {where!r}")
    kwargs = {}
    for k, v in data.items():
        where = f"{prefix}.{k}" if prefix else k
        kwargs[k] = _coerce(v, hints[k], where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.schema_version}")
    if cfg.episodes < 1:
        raise ConfigError("episodes: must be >= 1")
    if cfg.steps_per_episode < 1:
        raise ConfigError("steps_per_episode: must be >= 1")
    if not cfg.seeds:
        raise ConfigError("seeds: must be non-empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds: must be distinct")
    if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in cfg.seeds):
        raise ConfigError("seeds: expected non-negative ints")
    if cfg.agent.kind not in AGENTS:
        raise ConfigError(f"agent.kind: expected one of {AGENTS}, got {cfg.agent.kind!r}")
    if cfg.scenario.kind not in SCENARIOS:
        raise ConfigError(f"scenario.kind: expected one of {SCENARIOS}, got {cfg.scenario.kind!r}")
    if cfg.codebook.strategy not in ("greedy", "first"):
        raise ConfigError(f"codebook.strategy: expected 'greedy' or 'first', got {cfg.codebook.strategy!r}")
    if cfg.codebook.degree not in (5, 7):
        raise ConfigError("codebook.degree: expected 5 or 7")
    if not 1 <= cfg.codebook.size <= 2**cfg.codebook.degree + 1:
        raise ConfigError("codebook.size: must lie in [1, family size]")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    return validate(_build(ExperimentConfig, data))


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a JSON config (or defaults when ``path`` is None) and apply ``key=value`` overrides."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for item in overrides:
        apply_override(data, item)
    return from_dict(data)


def apply_override(data: dict, item: str) -> None:
    """Set a dotted key from ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {p} is not an object")
    node[parts[-1]] = value


def leaves(obj, prefix: str = ""):
    """Yield (dotted key, value) for every scalar or list setting."""
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(v):
            yield from leaves(v, key + ".")
        else:
            yield key, _to_jsonable(v)


def provenance(cfg: ExperimentConfig) -> dict:
    """Every setting with its value, whether it was defaulted, and its origin tag."""
    default = ExperimentConfig()
    base = dict(leaves(default))
    out = {}
    for key, value in leaves(cfg):
        out[key] = {
            "value": value,
            "defaulted": base.get(key) == value,
            "provenance": "published" if key in PUBLISHED_KEYS else "decision",
        }
    return out
