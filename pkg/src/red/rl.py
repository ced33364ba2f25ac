"""Reinforcement learning against a fixed learned reward, plus a BC baseline.

Agents only ever see the reward model's output; the environment's true reward
is used for evaluation rows in the learning curve and nothing else.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from red.envs import GRID_SIZE, GridWorld, encode_all_actions, encode_pair
from red.errors import EmptyDataset, InvalidDiscount, NonDiscreteInput, RewardOutOfRange, ShapeMismatch
from red.nn import AdamState, MlpParams, MlpSpec, adam_step, mlp_backward, mlp_forward, mlp_forward_cached, mlp_init

CURVE_COLUMNS = ("env_step", "true_reward_per_step", "true_reward_per_episode", "eval_std", "seed")


@dataclass
class CurveRow:
    env_step: int
    true_reward_per_step: float
    true_reward_per_episode: float
    eval_std: float
    seed: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in CURVE_COLUMNS)


class ReplayBuffer:
    """Fixed-capacity FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a: int, r: float, s_next, done: bool) -> None:
        i = self.pos
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.dones[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = self.sample_indices(batch_size, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]


@dataclass
class DqnConfig:
    hidden_dims: Tuple[int, ...] = (64, 64)
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
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(self.hidden_dims)
        if not 0 <= self.gamma < 1:
            raise InvalidDiscount(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be at least the batch size")
        for name in ("batch_size", "target_sync", "eval_interval", "eval_episodes", "eps_decay_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")

    def epsilon(self, step: int) -> float:
        frac = min(step / self.eps_decay_steps, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


class GreedyQPolicy:
    def __init__(self, params: MlpParams, actions: Sequence):
        self.params = params
        self.actions = tuple(actions)

    def q_values(self, state) -> np.ndarray:
        return mlp_forward(self.params, np.atleast_1d(np.asarray(state, dtype=np.float64)))

    def index(self, state) -> int:
        return int(np.argmax(self.q_values(state)))

    def __call__(self, state):
        return self.actions[self.index(state)]

    def to_dict(self) -> dict:
        return {"kind": "q_network", "actions": list(self.actions), "params": self.params.to_dict()}


def _eval_rng_seed(seed: int) -> int:
    # separate stream so evaluation never touches training randomness
    return int(np.random.SeedSequence([seed, 0xE7A1]).generate_state(1)[0])


def evaluate_policy(env_factory, policy, n_episodes: int, seed: int) -> Tuple[float, float, float]:
    """Greedy rollouts scored by the true reward.

    Returns ``(mean episodic reward, mean per-step reward, std over episodes of
    the per-step mean)``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    env = env_factory(seed)
    totals, per_step = [], []
    for _ in range(n_episodes):
        state = env.reset()
        total, steps, done, truncated = 0.0, 0, False, False
        while not (done or truncated):
            state, r, done, truncated = env.step(policy(state))
            total += r
            steps += 1
        totals.append(total)
        per_step.append(total / steps)
    return float(np.mean(totals)), float(np.mean(per_step)), float(np.std(per_step))


def dqn_train(env_factory, reward_model, cfg: DqnConfig, transition_log: Optional[list] = None):
    """Deep Q-learning with replay and a periodically synced target network.

    ``env_factory(seed)`` builds an environment; ``reward_model`` must expose
    ``reward(x)``, ``input_dim`` and ``terminal_adjustment(r_T)``. When
    ``transition_log`` is a list, every stored transition is appended to it.
    """
    rng = np.random.default_rng(cfg.seed)
    env_seed, net_seed = (int(v) for v in rng.integers(0, 2**63, size=2))
    env = env_factory(env_seed)
    n_actions = len(env.actions)
    state_dim = env.state_dim
    if reward_model.input_dim != state_dim + n_actions:
        raise ShapeMismatch(
            f"reward model expects dim {reward_model.input_dim}, env encodes pairs as {state_dim + n_actions}")
    spec = MlpSpec(state_dim, cfg.hidden_dims, n_actions, cfg.activation,
                   output_init_scale=cfg.output_init_scale, bias_init_scale=cfg.bias_init_scale)
    params = mlp_init(spec, net_seed)
    target = params.copy()
    adam = AdamState.zeros_like(params, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.replay_capacity, state_dim)
    eval_seed = _eval_rng_seed(cfg.seed)
    curve: List[CurveRow] = []

    def record(step):
        ep, ps, sd = evaluate_policy(env_factory, GreedyQPolicy(params, env.actions), cfg.eval_episodes, eval_seed)
        curve.append(CurveRow(step, ps, ep, sd, cfg.seed))

    state = env.reset()
    for step in range(1, cfg.total_steps + 1):
        if rng.random() < cfg.epsilon(step - 1):
            a = int(rng.integers(n_actions))
        else:
            a = int(np.argmax(mlp_forward(params, state)))
        r_hat = reward_model.reward(encode_pair(state, a, n_actions))
        if not 0.0 <= r_hat <= 1.0:
            raise RewardOutOfRange(f"per-step reward {r_hat} outside [0, 1]")
        next_state, _, done, truncated = env.step(env.actions[a])
        if done or truncated:
            r_hat += reward_model.terminal_adjustment(r_hat)
        buffer.push(state, a, r_hat, next_state, done)
        if transition_log is not None:
            transition_log.append((state.copy(), a, r_hat, next_state.copy(), done))
        state = env.reset() if (done or truncated) else next_state

        if step >= cfg.learning_starts and len(buffer) >= cfg.batch_size:
            s, act, r, s2, d = buffer.sample(cfg.batch_size, rng)
            y = td_targets(target, r, s2, d, cfg.gamma)
            q, cache = mlp_forward_cached(params, s)
            grad_out = np.zeros_like(q)
            rows = np.arange(len(act))
            err = q[rows, act] - y
            if cfg.loss == "huber":
                err = np.clip(err, -1.0, 1.0)
            grad_out[rows, act] = 2.0 * err / len(act)
            adam, params = adam_step(adam, params, mlp_backward(params, s, grad_out, cache))
        if step % cfg.target_sync == 0:
            target = params.copy()
        if step % cfg.eval_interval == 0 or step == cfg.total_steps:
            record(step)
    return GreedyQPolicy(params, env.actions), curve


def td_targets(target: MlpParams, rewards, next_states, dones, gamma: float) -> np.ndarray:
    """``r + gamma * (1 - done) * max_a' Q_target(s', a')``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if gamma == 0.0:
        return rewards.copy()
    q_next = mlp_forward(target, np.atleast_2d(next_states)).max(axis=1)
    return rewards + gamma * (1.0 - np.asarray(dones, dtype=np.float64)) * q_next


@dataclass
class TabularConfig:
    total_steps: int = 50000
    epsilon: float = 0.2
    gamma: float = 0.99
    alpha: float = 0.5
    absorbing_terminal: bool = True
    optimistic_init: bool = True
    eval_interval: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise InvalidDiscount(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.eval_interval < 1 or self.total_steps < 0:
            raise ValueError("invalid step counts")

    def to_dict(self) -> dict:
        return asdict(self)


class TabularPolicy:
    def __init__(self, q: np.ndarray, actions: Sequence):
        self.q = q
        self.actions = tuple(actions)

    def index(self, state) -> int:
        return int(np.argmax(self.q[GridWorld.state_index(state)]))

    def __call__(self, state):
        return self.actions[self.index(state)]

    def to_dict(self) -> dict:
        return {"kind": "q_table", "actions": list(self.actions), "q": self.q.tolist()}


def reward_table(reward_model, n_states: int, n_actions: int, state_of) -> np.ndarray:
    """Reward model evaluated on every discrete (state, action) pair."""
    X = np.vstack([encode_all_actions(state_of(i), n_actions) for i in range(n_states)])
    return np.asarray(reward_model.reward_batch(X), dtype=np.float64).reshape(n_states, n_actions)


def _grid_state(i: int) -> np.ndarray:
    return np.array([i % GRID_SIZE, i // GRID_SIZE], dtype=np.float64)


def tabular_q_train(env_factory, reward_model, cfg: TabularConfig):
    """Epsilon-greedy tabular Q-learning on the grid world.

    With ``absorbing_terminal`` the goal transition bootstraps from an absorbing
    state worth ``mean_expert_reward / (1 - gamma)``: the expert is treated as
    staying on its support after its demonstration ends. Without it, any
    positive reward makes cycling near the goal worth more than reaching it.
    """
    rng = np.random.default_rng(cfg.seed)
    env = env_factory(int(rng.integers(0, 2**63)))
    n_actions = len(env.actions)
    if reward_model.input_dim != env.state_dim + n_actions:
        raise ShapeMismatch("reward model input dim does not match the grid encoding")
    if not isinstance(env, GridWorld):
        raise NonDiscreteInput("tabular Q-learning needs a discrete environment")
    n_states = env.n_states()
    R = reward_table(reward_model, n_states, n_actions, _grid_state)
    if np.any(R < 0) or np.any(R > 1):
        raise RewardOutOfRange("reward table outside [0, 1]")
    # rewards lie in [0, 1], so 1 / (1 - gamma) bounds every value from above;
    # starting there makes untried actions look best until they are tried
    q = np.full((n_states, n_actions), 1.0 / (1.0 - cfg.gamma) if cfg.optimistic_init else 0.0)
    absorbing_value = reward_model.mean_expert_reward / (1.0 - cfg.gamma)
    curve: List[CurveRow] = []
    eval_seed = _eval_rng_seed(cfg.seed)

    state = env.reset()
    for step in range(1, cfg.total_steps + 1):
        si = env.state_index(state)
        if rng.random() < cfg.epsilon:
            a = int(rng.integers(n_actions))
        else:
            a = int(np.argmax(q[si]))
        next_state, _, done, truncated = env.step(env.actions[a])
        r = R[si, a]
        if done or truncated:
            r += reward_model.terminal_adjustment(r)
        if done:
            bootstrap = absorbing_value if cfg.absorbing_terminal else 0.0
        else:
            bootstrap = q[env.state_index(next_state)].max()
        q[si, a] += cfg.alpha * (r + cfg.gamma * bootstrap - q[si, a])
        state = env.reset() if (done or truncated) else next_state
        if step % cfg.eval_interval == 0 or step == cfg.total_steps:
            ep, ps, sd = evaluate_policy(env_factory, TabularPolicy(q, env.actions), 1, eval_seed)
            curve.append(CurveRow(step, ps, ep, sd, cfg.seed))
    return TabularPolicy(q, env.actions), curve


def expert_agreement(policy, dataset) -> float:
    """Fraction of distinct expert states where ``policy`` picks the expert's action."""
    seen = {}
    for s, a in zip(dataset.states, dataset.actions):
        seen[tuple(s)] = int(a)
    hits = sum(policy(np.array(s)) == dataset.action_values[a] for s, a in seen.items())
    return hits / len(seen)


class BCPolicy:
    def __init__(self, params: MlpParams, actions: Sequence):
        self.params = params
        self.actions = tuple(actions)

    def index(self, state) -> int:
        return int(np.argmax(mlp_forward(self.params, np.atleast_1d(np.asarray(state, dtype=np.float64)))))

    def __call__(self, state):
        return self.actions[self.index(state)]

    def to_dict(self) -> dict:
        return {"kind": "bc", "actions": list(self.actions), "params": self.params.to_dict()}


def behavioral_cloning(data, spec: Optional[MlpSpec] = None, steps: int = 2000, seed: int = 0,
                       lr: float = 1e-2) -> BCPolicy:
    """Softmax classifier from state to action index, trained full-batch."""
    if data is None or data.n == 0:
        raise EmptyDataset("behavioral cloning needs data")
    state_dim = data.states.shape[1]
    spec = spec or MlpSpec(state_dim, (64, 64), data.n_actions, "tanh")
    if spec.input_dim != state_dim or spec.output_dim != data.n_actions:
        raise ShapeMismatch(f"policy net {spec.input_dim}->{spec.output_dim} vs data {state_dim}->{data.n_actions}")
    params = mlp_init(spec, seed)
    adam = AdamState.zeros_like(params, lr=lr)
    onehot = np.eye(data.n_actions)[data.actions]
    n = data.n
    for _ in range(steps):
        logits, cache = mlp_forward_cached(params, data.states)
        logits = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        adam, params = adam_step(adam, params, mlp_backward(params, data.states, (probs - onehot) / n, cache))
    return BCPolicy(params, data.action_values)
