"""Toy environments and expert demonstrations.

``SimpleDomain`` is the stateless task with s ~ U(-1, 1), actions {-1, +1}
and true reward a*s. ``GridWorld`` is a deterministic 8x8 grid whose expert
walks right along the bottom row and then up the right column.

Environments take action *values* (``env.actions[i]``); agents work with the
index ``i``. Scorers see ``concat(state, one_hot(i))``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from red.errors import DatasetNotFound, EmptyDataset, InvalidAction, InvalidCount, ShapeMismatch

SIMPLE_EPISODE_LEN = 100


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


def encode_pair(state, action_index: int, n_actions: int) -> np.ndarray:
    return np.concatenate([np.atleast_1d(np.asarray(state, dtype=np.float64)), one_hot(action_index, n_actions)])


def encode_all_actions(state, n_actions: int) -> np.ndarray:
    """Rows ``encode_pair(state, i)`` for every action index ``i``."""
    s = np.atleast_1d(np.asarray(state, dtype=np.float64))
    return np.hstack([np.tile(s, (n_actions, 1)), np.eye(n_actions)])


class SimpleDomain:
    actions = (-1, 1)
    state_dim = 1
    name = "simple"

    def __init__(self, seed: int = 0, episode_len: int = SIMPLE_EPISODE_LEN):
        self.rng = np.random.default_rng(seed)
        self.episode_len = episode_len
        self.s = 0.0
        self.step_index = 0

    def reset(self) -> np.ndarray:
        self.step_index = 0
        self.s = float(self.rng.uniform(-1.0, 1.0))
        return np.array([self.s])

    def step(self, a) -> Tuple[np.ndarray, float, bool, bool]:
        """Returns ``(next_state, true_reward, terminated, truncated)``.

        The task never terminates; it is truncated after ``episode_len`` steps.
        """
        reward = simple_step_reward(self.s, a)
        self.step_index += 1
        self.s = float(self.rng.uniform(-1.0, 1.0))
        return np.array([self.s]), reward, False, self.step_index >= self.episode_len

    def expert(self, state) -> int:
        return simple_expert(float(np.asarray(state).reshape(-1)[0]))


def simple_step_reward(s: float, a) -> float:
    if a not in (-1, 1):
        raise InvalidAction(f"simple domain actions are -1 and +1, got {a!r}")
    return float(a) * float(s)


def simple_step(s: float, a, rng: np.random.Generator) -> Tuple[float, float]:
    """One transition of the stateless task: ``(next_s, a*s)``."""
    reward = simple_step_reward(s, a)
    return float(rng.uniform(-1.0, 1.0)), reward


def simple_expert(s: float) -> int:
    return 1 if s >= 0 else -1


GRID_SIZE = 8
GRID_MAX_STEPS = 64
GRID_START = (0, 0)
GRID_GOAL = (7, 7)
_MOVES = {"up": (0, 1), "down": (0, -1), "left": (-1, 0), "right": (1, 0)}


def grid_step(pos: Tuple[int, int], action: str) -> Tuple[Tuple[int, int], bool]:
    """Move with wall clipping; ``done`` is True on reaching the goal."""
    if action not in _MOVES:
        raise InvalidAction(f"grid actions are {list(_MOVES)}, got {action!r}")
    dx, dy = _MOVES[action]
    x = min(max(pos[0] + dx, 0), GRID_SIZE - 1)
    y = min(max(pos[1] + dy, 0), GRID_SIZE - 1)
    return (x, y), (x, y) == GRID_GOAL


def grid_expert(pos) -> str:
    x = int(pos[0])
    return "right" if x < GRID_SIZE - 1 else "up"


class GridWorld:
    actions = ("up", "down", "left", "right")
    state_dim = 2
    name = "grid"

    def __init__(self, seed: int = 0, max_steps: int = GRID_MAX_STEPS):
        self.max_steps = max_steps
        self.pos = GRID_START
        self.step_index = 0

    def reset(self) -> np.ndarray:
        self.pos = GRID_START
        self.step_index = 0
        return np.array(self.pos, dtype=np.float64)

    def step(self, action) -> Tuple[np.ndarray, float, bool, bool]:
        """True reward is 1 on reaching the goal, 0 otherwise."""
        self.pos, done = grid_step(self.pos, action)
        self.step_index += 1
        truncated = not done and self.step_index >= self.max_steps
        return np.array(self.pos, dtype=np.float64), float(done), done, truncated

    def expert(self, state) -> str:
        return grid_expert(state)

    @staticmethod
    def state_index(state) -> int:
        x, y = int(state[0]), int(state[1])
        return y * GRID_SIZE + x

    @staticmethod
    def n_states() -> int:
        return GRID_SIZE * GRID_SIZE


def make_env(kind: str, seed: int = 0):
    if kind == "simple":
        return SimpleDomain(seed)
    if kind == "grid":
        return GridWorld(seed)
    raise ValueError(f"unknown env {kind!r}")


@dataclass
class ExpertDataset:
    states: np.ndarray  # (n, state_dim)
    actions: np.ndarray  # (n,) action indices
    action_values: tuple
    source: str = ""
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if len(self.states) == 0:
            raise EmptyDataset("expert dataset has no pairs")
        if len(self.actions) != len(self.states):
            raise ShapeMismatch("states and actions differ in length")
        if self.actions.min() < 0 or self.actions.max() >= len(self.action_values):
            raise ShapeMismatch("action index out of range")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.action_values)

    def joint(self) -> np.ndarray:
        return np.hstack([self.states, np.eye(self.n_actions)[self.actions]])

    def flipped(self) -> "ExpertDataset":
        """Same states with the other action (two-action spaces only)."""
        if self.n_actions != 2:
            raise ValueError("flipped pairs need exactly two actions")
        return ExpertDataset(self.states, 1 - self.actions, self.action_values, self.source + ":flipped", self.seed)

    def metadata(self) -> dict:
        return {
            "action_space": {"type": "discrete", "n": self.n_actions, "values": list(self.action_values)},
            "source": self.source,
            "seed": self.seed,
            "n": self.n,
        }

    def save(self, path: str) -> None:
        """CSV of joint encodings plus a ``<path>.json`` sidecar."""
        d = self.states.shape[1]
        header = [f"s_{i}" for i in range(d)] + [f"a_enc_{i}" for i in range(self.n_actions)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.joint():
                w.writerow([repr(float(v)) for v in row])
        with open(path + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2)

    @classmethod
    def load(cls, path: str) -> "ExpertDataset":
        if not os.path.exists(path):
            raise DatasetNotFound(f"no dataset at {path}")
        meta_path = path + ".json"
        meta = {}
        if os.path.exists(meta_path):
            with open(meta_path) as fh:
                meta = json.load(fh)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
        n_state = sum(1 for h in header if h.startswith("s_"))
        enc = data[:, n_state:]
        values = tuple(meta.get("action_space", {}).get("values", range(enc.shape[1])))
        return cls(data[:, :n_state], enc.argmax(axis=1), values, meta.get("source", path), meta.get("seed"))


def generate_expert_dataset(
    env_kind: str,
    n: int = 10,
    seed: int = 0,
    policy: Optional[Callable] = None,
) -> ExpertDataset:
    """Simple domain: ``n`` i.i.d. states with expert actions.
    Grid: ``n`` expert trajectories from the start cell (deterministic, so the
    pairs repeat).
    """
    if n < 1:
        raise InvalidCount(f"need at least one pair/trajectory, got {n}")
    env = make_env(env_kind, seed)
    policy = policy or env.expert
    states, actions = [], []
    if env_kind == "simple":
        rng = np.random.default_rng(seed)
        for s in rng.uniform(-1.0, 1.0, size=n):
            states.append([s])
            actions.append(env.actions.index(policy(np.array([s]))))
    else:
        for _ in range(n):
            state, done, truncated = env.reset(), False, False
            while not (done or truncated):
                a = policy(state)
                states.append(state)
                actions.append(env.actions.index(a))
                state, _, done, truncated = env.step(a)
    return ExpertDataset(np.array(states), np.array(actions), env.actions, f"{env_kind}-expert", seed)
