"""Support scorers built from regression residuals, plus an exact-set scorer.

All scorers share one duck-typed contract: ``score(x) -> float >= 0`` (low
means on-support), ``score_batch(X) -> ndarray``, ``input_dim``, ``kind`` and
``descriptor``, with ``to_dict``/``from_dict`` for persistence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from red.errors import (
    BottleneckSpec,
    EmptyDataset,
    NonDiscreteInput,
    RegularizationRequired,
    ShapeMismatch,
)
from red.kernel import KernelSupportModel
from red.nn import (
    AdamState,
    MlpParams,
    MlpSpec,
    TrainLog,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_init,
)

FORMAT_VERSION = 1
STD_FLOOR = 1e-8

DEFAULT_RND_STEPS = 20000
DEFAULT_AE_STEPS = 20000
DEFAULT_AE_WEIGHT_DECAY = 1e-4


def joint_inputs(data) -> np.ndarray:
    """Accept an ExpertDataset (anything with ``joint()``) or a raw 2-D array."""
    X = data.joint() if hasattr(data, "joint") else np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise EmptyDataset("expert dataset is empty")
    return X


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        std = X.std(axis=0)
        # constant columns (e.g. a one-hot slot the experts never use) are only centred
        std = np.where(std < STD_FLOOR, 1.0, std)
        return cls(X.mean(axis=0), std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def _check_batch(X, dim: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ShapeMismatch(f"expected inputs of dim {dim}, got shape {X.shape}")
    return X, single


@dataclass
class RndModel:
    target: MlpParams
    predictor: MlpParams
    normalizer: Normalizer
    log: TrainLog = field(default_factory=TrainLog)

    kind = "rnd"

    def __post_init__(self):
        if self.target.spec.output_dim != self.predictor.spec.output_dim:
            raise ShapeMismatch("target and predictor embedding sizes differ")
        if self.target.spec.input_dim != self.predictor.spec.input_dim:
            raise ShapeMismatch("target and predictor input sizes differ")

    @property
    def input_dim(self) -> int:
        return self.target.spec.input_dim

    @property
    def embed_dim(self) -> int:
        return self.target.spec.output_dim

    @property
    def descriptor(self) -> str:
        t, p = self.target.spec, self.predictor.spec
        return f"rnd(target={list(t.hidden_dims)}, predictor={list(p.hidden_dims)}, K={t.output_dim})"

    def score_batch(self, X) -> np.ndarray:
        X, _ = _check_batch(X, self.input_dim)
        Z = self.normalizer.normalize(X)
        diff = mlp_forward(self.predictor, Z) - mlp_forward(self.target, Z)
        return np.sum(diff * diff, axis=1)

    def score(self, x) -> float:
        return rnd_score(self, x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "descriptor": self.descriptor,
            "target": self.target.to_dict(),
            "predictor": self.predictor.to_dict(),
            "normalizer": self.normalizer.to_dict(),
            "final_loss": self.log.final_loss,
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RndModel":
        log = TrainLog(final_loss=d.get("final_loss", float("nan")))
        return cls(MlpParams.from_dict(d["target"]), MlpParams.from_dict(d["predictor"]),
                   Normalizer.from_dict(d["normalizer"]), log)


def default_target_spec(input_dim: int, embed_dim: int = 32) -> MlpSpec:
    return MlpSpec(input_dim, (64, 64), embed_dim, "tanh")


def default_predictor_spec(input_dim: int, embed_dim: int = 32) -> MlpSpec:
    return MlpSpec(input_dim, (128, 128), embed_dim, "tanh")


def _fit_regression(params, Z, Y, steps, lr, weight_decay=0.0, log_every=0):
    """Full-batch Adam on mean squared error (+ optional L2 on weights)."""
    state = AdamState.zeros_like(params, lr=lr)
    log = TrainLog()
    n = len(Z)
    for step in range(steps + 1):
        out, cache = mlp_forward_cached(params, Z)
        diff = out - Y
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        if weight_decay:
            loss += weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
        if step == 0:
            log.initial_loss = loss
        if log_every and step % log_every == 0:
            log.history.append(loss)
        if step == steps:
            log.final_loss = loss
            break
        grads = mlp_backward(params, Z, 2.0 * diff / n, cache)
        if weight_decay:
            grads = [g + 2.0 * weight_decay * a if k % 2 == 0 else g
                     for k, (g, a) in enumerate(zip(grads, params.arrays()))]
        state, params = adam_step(state, params, grads)
    log.steps = steps
    return params, log


def fit_rnd(
    data,
    target_spec: Optional[MlpSpec] = None,
    predictor_spec: Optional[MlpSpec] = None,
    steps: int = DEFAULT_RND_STEPS,
    seed: int = 0,
    lr: float = 1e-3,
    normalize: bool = True,
) -> RndModel:
    """Distill a frozen random target network into a predictor on expert inputs."""
    X = joint_inputs(data)
    d = X.shape[1]
    target_spec = target_spec or default_target_spec(d)
    predictor_spec = predictor_spec or default_predictor_spec(d, target_spec.output_dim)
    if target_spec.input_dim != d or predictor_spec.input_dim != d:
        raise ShapeMismatch(f"network input dims do not match data dim {d}")
    if target_spec.output_dim != predictor_spec.output_dim:
        raise ShapeMismatch("target and predictor embedding sizes differ")
    rng = np.random.default_rng(seed)
    target_seed, predictor_seed = rng.integers(0, 2**63, size=2)
    target = mlp_init(target_spec, int(target_seed))
    predictor = mlp_init(predictor_spec, int(predictor_seed))
    normalizer = Normalizer.fit(X) if normalize else Normalizer.identity(d)
    Z = normalizer.normalize(X)
    Y = mlp_forward(target, Z)
    predictor, log = _fit_regression(predictor, Z, Y, steps, lr)
    return RndModel(target, predictor, normalizer, log)


def rnd_score(model: RndModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeMismatch(f"expected a vector of dim {model.input_dim}, got shape {x.shape}")
    return float(model.score_batch(x)[0])


@dataclass
class AeModel:
    params: MlpParams
    weight_decay: float
    normalizer: Normalizer
    log: TrainLog = field(default_factory=TrainLog)

    kind = "ae"

    def __post_init__(self):
        if self.params.spec.output_dim != self.params.spec.input_dim:
            raise ShapeMismatch("autoencoder output dim must equal input dim")
        if not self.weight_decay > 0:
            raise RegularizationRequired("autoencoder needs a positive L2 weight")

    @property
    def input_dim(self) -> int:
        return self.params.spec.input_dim

    @property
    def descriptor(self) -> str:
        return f"ae(hidden={list(self.params.spec.hidden_dims)}, l2={self.weight_decay:g})"

    def score_batch(self, X) -> np.ndarray:
        X, _ = _check_batch(X, self.input_dim)
        Z = self.normalizer.normalize(X)
        diff = mlp_forward(self.params, Z) - Z
        return np.sum(diff * diff, axis=1)

    def score(self, x) -> float:
        return ae_score(self, x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "descriptor": self.descriptor,
            "params": self.params.to_dict(),
            "weight_decay": self.weight_decay,
            "normalizer": self.normalizer.to_dict(),
            "final_loss": self.log.final_loss,
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AeModel":
        log = TrainLog(final_loss=d.get("final_loss", float("nan")))
        return cls(MlpParams.from_dict(d["params"]), float(d["weight_decay"]),
                   Normalizer.from_dict(d["normalizer"]), log)


def default_ae_spec(input_dim: int) -> MlpSpec:
    return MlpSpec(input_dim, (128, 128), input_dim, "tanh")


def fit_autoencoder(
    data,
    spec: Optional[MlpSpec] = None,
    weight_decay: float = DEFAULT_AE_WEIGHT_DECAY,
    steps: int = DEFAULT_AE_STEPS,
    seed: int = 0,
    lr: float = 1e-3,
    normalize: bool = True,
) -> AeModel:
    """Overparametrized autoencoder; the L2 term keeps it from becoming the identity."""
    X = joint_inputs(data)
    d = X.shape[1]
    spec = spec or default_ae_spec(d)
    if spec.input_dim != d or spec.output_dim != d:
        raise ShapeMismatch(f"autoencoder dims must both equal data dim {d}")
    if any(h < d for h in spec.hidden_dims):
        raise BottleneckSpec(f"hidden widths {list(spec.hidden_dims)} narrower than input dim {d}")
    if not weight_decay > 0:
        raise RegularizationRequired("autoencoder needs a positive L2 weight")
    params = mlp_init(spec, seed)
    normalizer = Normalizer.fit(X) if normalize else Normalizer.identity(d)
    Z = normalizer.normalize(X)
    params, log = _fit_regression(params, Z, Z, steps, lr, weight_decay=weight_decay)
    return AeModel(params, weight_decay, normalizer, log)


def ae_score(model: AeModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeMismatch(f"expected a vector of dim {model.input_dim}, got shape {x.shape}")
    return float(model.score_batch(x)[0])


def _discrete_keys(X: np.ndarray) -> list[tuple]:
    if not np.all(np.isfinite(X)) or not np.array_equal(X, np.round(X)):
        raise NonDiscreteInput("exact-set scoring needs integral encodings")
    return [tuple(int(v) for v in row) for row in X]


@dataclass
class ExactSupportModel:
    keys: frozenset
    input_dim: int

    kind = "exact"

    @property
    def descriptor(self) -> str:
        return f"exact({len(self.keys)} pairs)"

    def score_batch(self, X) -> np.ndarray:
        X, _ = _check_batch(X, self.input_dim)
        return np.array([0.0 if k in self.keys else 1.0 for k in _discrete_keys(X)])

    def score(self, x) -> float:
        return exact_score(self, x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "descriptor": self.descriptor,
            "input_dim": self.input_dim,
            "keys": sorted(list(k) for k in self.keys),
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExactSupportModel":
        return cls(frozenset(tuple(k) for k in d["keys"]), int(d["input_dim"]))


def fit_exact(data) -> ExactSupportModel:
    X = joint_inputs(data)
    return ExactSupportModel(frozenset(_discrete_keys(X)), X.shape[1])


def exact_score(model: ExactSupportModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeMismatch(f"expected a vector of dim {model.input_dim}, got shape {x.shape}")
    return float(model.score_batch(x)[0])


_SCORERS = {
    "kernel": KernelSupportModel,
    "rnd": RndModel,
    "ae": AeModel,
    "exact": ExactSupportModel,
}


def scorer_from_dict(d: dict):
    try:
        cls = _SCORERS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown scorer kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


def save_scorer(scorer, path) -> None:
    with open(path, "w") as fh:
        json.dump(scorer.to_dict(), fh)


def load_scorer(path):
    with open(path) as fh:
        return scorer_from_dict(json.load(fh))


def auc(on_support: Sequence[float], off_support: Sequence[float]) -> float:
    """Probability that a random off-support score exceeds a random on-support one (ties count half)."""
    a = np.asarray(on_support, dtype=np.float64)[:, None]
    b = np.asarray(off_support, dtype=np.float64)[None, :]
    return float(np.mean((b > a) + 0.5 * (b == a)))
