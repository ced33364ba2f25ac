"""Run configuration: a single JSON document, strict about unknown keys."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import List, Optional, Union

from red.errors import ConfigError

ESTIMATORS = ("kernel", "rnd", "ae", "exact")
ENVS = ("simple", "grid")
U64 = 2**64 - 1


def stable_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def component_seed(master: int, name: str) -> int:
    """``master XOR sha256(name)[:8]``, so components never share a stream."""
    return (int(master) ^ stable_hash(name)) & U64


@dataclass
class KernelConfig:
    bandwidth: Union[float, str] = "median"
    exponent_form: str = "euclidean_norm"
    m: Union[int, str] = "auto"
    ridge: Optional[float] = None


@dataclass
class RndConfig:
    target_hidden: List[int] = field(default_factory=lambda: [64, 64])
    predictor_hidden: List[int] = field(default_factory=lambda: [128, 128])
    embed_dim: int = 32
    activation: str = "tanh"
    steps: int = 20000
    lr: float = 1e-3
    normalize: bool = True


@dataclass
class AeConfig:
    hidden: List[int] = field(default_factory=lambda: [128, 128])
    activation: str = "tanh"
    weight_decay: float = 1e-4
    steps: int = 20000
    lr: float = 1e-3
    normalize: bool = True


@dataclass
class EstimatorConfig:
    kind: str = "rnd"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    rnd: RndConfig = field(default_factory=RndConfig)
    ae: AeConfig = field(default_factory=AeConfig)


@dataclass
class RewardConfig:
    target_reward: float = 0.9
    quantile: float = 0.9
    terminal: bool = False
    sigma2: float = 1.0
    sigma3: float = 0.5
    alpha1: float = 1.0


@dataclass
class DatasetConfig:
    path: Optional[str] = None
    n: int = 10


@dataclass
class DqnSection:
    hidden_dims: List[int] = field(default_factory=lambda: [64, 64])
    activation: str = "tanh"
    output_init_scale: Optional[float] = None
    bias_init_scale: float = 0.0
    loss: str = "mse"
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 5000
    replay_capacity: int = 10000
    batch_size: int = 32
    target_sync: int = 250
    total_steps: int = 20000
    learning_starts: int = 500
    lr: float = 1e-3
    eval_interval: int = 1000
    eval_episodes: int = 10


@dataclass
class TabularSection:
    total_steps: int = 50000
    epsilon: float = 0.2
    gamma: float = 0.99
    alpha: float = 0.5
    absorbing_terminal: bool = True
    optimistic_init: bool = True
    eval_interval: int = 1000


@dataclass
class RlConfig:
    dqn: DqnSection = field(default_factory=DqnSection)
    tabular: TabularSection = field(default_factory=TabularSection)


@dataclass
class GridSpec:
    low: float = -1.0
    high: float = 1.0
    points: int = 201
    #: explicit (state..., action value) rows; overrides the uniform grid
    pairs: Optional[list] = None


@dataclass
class SweepConfig:
    estimators: List[str] = field(default_factory=list)
    sizes: List[int] = field(default_factory=list)
    seeds: int = 5


@dataclass
class RunConfig:
    env: str = "simple"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    score_grid: GridSpec = field(default_factory=GridSpec)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    out: str = "runs/default"
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.env not in ENVS:
            raise ConfigError(f"env must be one of {ENVS}, got {self.env!r}")
        if self.estimator.kind not in ESTIMATORS:
            raise ConfigError(f"estimator.kind must be one of {ESTIMATORS}, got {self.estimator.kind!r}")
        if not 0 <= int(self.seed) <= U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in self.sweep.estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown sweep estimator {name!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return from_dict(RunConfig, _deep_merge(self.to_dict(), changes))


def _deep_merge(base: dict, changes: dict) -> dict:
    out = dict(base)
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def from_dict(cls, data: dict, path: str = ""):
    """Build a (nested) config dataclass, rejecting keys it does not declare."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path or 'config'}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = from_dict(hint, value, f"{path}{key}.")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return from_dict(RunConfig, data).validate()
