"""Fixed reward functions derived from support scores."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from red.errors import EmptyDataset, EmptyLosses, NegativeLoss, RewardOutOfRange
from red.estimators import joint_inputs


def calibrate_sigma1(expert_losses: Sequence[float], target_reward: float = 0.9, quantile: float = 0.9) -> float:
    """Pick sigma1 so the ``quantile``-th expert loss maps to reward ``target_reward``.

    Falls back to 1.0 when that quantile is zero.
    """
    losses = np.asarray(expert_losses, dtype=np.float64)
    if losses.size == 0:
        raise EmptyLosses("cannot calibrate on an empty loss list")
    if np.any(losses < 0):
        raise NegativeLoss("losses must be non-negative")
    if not 0 < target_reward < 1:
        raise ValueError("target reward must lie in (0, 1)")
    if not 0 < quantile <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    # "higher" picks an attained loss, so the calibration guarantee is exact
    q_loss = float(np.quantile(losses, quantile, method="higher"))
    if q_loss == 0.0:
        return 1.0
    sigma1 = -math.log(target_reward) / q_loss
    # roundoff guard: the quantile pair must not land a hair below target_reward
    while math.exp(-sigma1 * q_loss) < target_reward:
        sigma1 = math.nextafter(sigma1, 0.0)
    return sigma1


def red_reward(sigma1: float, loss):
    """``exp(-sigma1 * loss)``; accepts scalars or arrays."""
    arr = np.asarray(loss, dtype=np.float64)
    if np.any(arr < 0):
        raise NegativeLoss(f"loss must be non-negative, got {loss}")
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    out = np.exp(-sigma1 * arr)
    return float(out) if out.ndim == 0 else out


def viz_reward(alpha1: float, loss):
    """Linear ``1 - alpha1 * loss`` used only for plotting reward maps."""
    if not alpha1 > 0:
        raise ValueError("alpha1 must be positive")
    out = 1.0 - alpha1 * np.asarray(loss, dtype=np.float64)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TerminalParams:
    sigma2: float = 1.0
    sigma3: float = 0.5

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if not 0 <= self.sigma3 <= 1:
            raise ValueError("sigma3 must lie in [0, 1]")


def terminal_reward(mean_reward: float, params: TerminalParams, final_reward: float) -> float:
    """Episode-end penalty ``-sigma2 * mean_reward`` when the last step's reward
    falls below ``sigma3 * mean_reward``; ``mean_reward`` is the positive expert mean.
    """
    if final_reward < params.sigma3 * mean_reward:
        return -params.sigma2 * mean_reward
    return 0.0


@dataclass
class RewardModel:
    scorer: object
    sigma1: float
    mean_expert_reward: float = 1.0
    terminal: Optional[TerminalParams] = None
    alpha1: float = 1.0
    scorer_path: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.sigma1 > 0:
            raise ValueError("sigma1 must be positive")

    @property
    def input_dim(self) -> int:
        return self.scorer.input_dim

    def reward_batch(self, X) -> np.ndarray:
        r = red_reward(self.sigma1, self.scorer.score_batch(X))
        r = np.atleast_1d(r)
        if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise RewardOutOfRange("reward model produced a value outside [0, 1]")
        return r

    def reward(self, x) -> float:
        return float(self.reward_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def terminal_adjustment(self, final_reward: float) -> float:
        if self.terminal is None:
            return 0.0
        return terminal_reward(self.mean_expert_reward, self.terminal, final_reward)

    def to_dict(self) -> dict:
        return {
            "scorer_path": self.scorer_path,
            "sigma1": self.sigma1,
            "mean_expert_reward": self.mean_expert_reward,
            "alpha1": self.alpha1,
            "terminal_enabled": self.terminal is not None,
            "sigma2": self.terminal.sigma2 if self.terminal else None,
            "sigma3": self.terminal.sigma3 if self.terminal else None,
            "format_version": 1,
        }

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path: str, scorer=None) -> "RewardModel":
        from red.estimators import load_scorer

        with open(path) as fh:
            d = json.load(fh)
        if scorer is None:
            scorer = load_scorer(d["scorer_path"])
        terminal = TerminalParams(d["sigma2"], d["sigma3"]) if d.get("terminal_enabled") else None
        return cls(scorer, d["sigma1"], d["mean_expert_reward"], terminal, d.get("alpha1", 1.0), d["scorer_path"])


def mean_expert_reward(reward_model: RewardModel, data) -> float:
    X = joint_inputs(data)
    if len(X) == 0:
        raise EmptyDataset("no expert pairs")
    return float(np.mean(reward_model.reward_batch(X)))


def build_reward_model(
    scorer,
    data,
    target_reward: float = 0.9,
    quantile: float = 0.9,
    terminal: Optional[TerminalParams] = None,
    alpha1: float = 1.0,
) -> RewardModel:
    """Calibrate sigma1 on the expert scores and compute the expert mean reward."""
    X = joint_inputs(data)
    losses = scorer.score_batch(X)
    sigma1 = calibrate_sigma1(losses, target_reward, quantile)
    model = RewardModel(scorer, sigma1, 1.0, terminal, alpha1)
    model.mean_expert_reward = mean_expert_reward(model, X)
    return model


class ConstantReward:
    """Reward that ignores its input; used for null experiments."""

    def __init__(self, value: float, input_dim: int):
        self.value = float(value)
        self.input_dim = input_dim
        self.mean_expert_reward = self.value
        self.terminal = None

    def reward_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.full(len(X), self.value)

    def reward(self, x) -> float:
        return self.value

    def terminal_adjustment(self, final_reward: float) -> float:
        return 0.0
