"""Small fixed-topology MLPs in numpy: init, forward, backprop and Adam.

Parameters are plain lists of float64 arrays so they can be copied, compared
bit-for-bit and serialized without ceremony. All functions return new objects
and never mutate their inputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from red.errors import InvalidStep, ShapeMismatch

FORMAT_VERSION = 1

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...] = ()
    output_dim: int = 1
    activation: str = "tanh"
    init_scale: float = 1.0
    #: std multiplier for the last layer's weights; None means ``init_scale``
    output_init_scale: Optional[float] = None
    #: std of Gaussian hidden-layer biases; 0 keeps them at zero
    bias_init_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = self.dims
        if any(d < 1 for d in dims):
            raise ShapeMismatch(f"all layer widths must be >= 1, got {dims}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.output_init_scale is not None and self.output_init_scale < 0:
            raise ValueError("output_init_scale must be >= 0")
        if self.bias_init_scale < 0:
            raise ValueError("bias_init_scale must be >= 0")

    @property
    def dims(self) -> List[int]:
        return [self.input_dim, *self.hidden_dims, self.output_dim]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(**d)


@dataclass
class MlpParams:
    """Weights ``w[i]`` of shape (dims[i+1], dims[i]) and biases ``b[i]``."""

    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(self.spec, list(arrays[0::2]), list(arrays[1::2]))

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def equals(self, other: "MlpParams") -> bool:
        """Bitwise equality of spec and every array."""
        if self.spec != other.spec:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)],
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        spec = MlpSpec.from_dict(d["spec"])
        weights = [np.asarray(layer["w"], dtype=np.float64) for layer in d["layers"]]
        biases = [np.asarray(layer["b"], dtype=np.float64) for layer in d["layers"]]
        params = cls(spec, weights, biases)
        _check_layer_shapes(params)
        return params

    def to_json(self) -> str:
        # json emits repr() floats, the shortest string that round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MlpParams":
        return cls.from_dict(json.loads(text))


def _check_layer_shapes(params: MlpParams) -> None:
    dims = params.spec.dims
    if len(params.weights) != len(dims) - 1 or len(params.biases) != len(dims) - 1:
        raise ShapeMismatch("layer count does not match spec")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
            raise ShapeMismatch(f"layer {i} has shapes {w.shape}, {b.shape}")


def mlp_init(spec: MlpSpec, seed: int) -> MlpParams:
    """Gaussian weights with std ``init_scale / sqrt(fan_in)``, zero biases.

    ``output_init_scale`` and ``bias_init_scale`` override the last layer's
    weight scale and draw hidden biases from N(0, bias_init_scale**2).
    """
    rng = np.random.default_rng(seed)
    dims = spec.dims
    last = len(dims) - 2
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = spec.init_scale
        if i == last and spec.output_init_scale is not None:
            scale = spec.output_init_scale
        weights.append(rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in)))
        if i < last and spec.bias_init_scale > 0:
            biases.append(rng.normal(0.0, spec.bias_init_scale, size=fan_out))
        else:
            biases.append(np.zeros(fan_out))
    return MlpParams(spec, weights, biases)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(z.dtype)


def _as_batch(params: MlpParams, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ShapeMismatch(f"expected input dim {params.spec.input_dim}, got shape {x.shape}")
    return x, single


def _forward_cache(params: MlpParams, x: np.ndarray):
    act = params.spec.activation
    pre, post = [], [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = z if i == last else _activate(act, z)
        pre.append(z)
        post.append(h)
    return pre, post


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on a single vector or a (batch, input_dim) array."""
    xb, single = _as_batch(params, x)
    _, post = _forward_cache(params, xb)
    out = post[-1]
    return out[0] if single else out


def mlp_forward_cached(params: MlpParams, x):
    """Forward pass that also returns the activations ``mlp_backward`` can reuse."""
    xb, _ = _as_batch(params, x)
    cache = _forward_cache(params, xb)
    return cache[1][-1], cache


def mlp_backward(params: MlpParams, x, grad_out: np.ndarray, cache=None) -> List[np.ndarray]:
    """Backpropagate ``grad_out`` (dLoss/doutput, batch-shaped) to parameter gradients.

    Returns arrays in the order of ``MlpParams.arrays()``. Pass ``cache`` from
    ``mlp_forward_cached`` on the same inputs to skip the forward pass.
    """
    if cache is None:
        xb, _ = _as_batch(params, x)
        cache = _forward_cache(params, xb)
    pre, post = cache
    delta = np.asarray(grad_out, dtype=np.float64).reshape(post[-1].shape)
    act = params.spec.activation
    grads: List[np.ndarray] = []
    for i in range(len(params.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ post[i])
        if i > 0:
            delta = (delta @ params.weights[i]) * _activate_grad(act, pre[i - 1], post[i])
    grads.reverse()  # now [w0, b0, w1, b1, ...]
    return grads


def mse_loss(params: MlpParams, inputs, targets) -> float:
    """Mean over the batch of the squared Euclidean error."""
    xb, _ = _as_batch(params, inputs)
    yb = _targets_like(params, targets, len(xb))
    diff = mlp_forward(params, xb) - yb
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _targets_like(params: MlpParams, targets, n: int) -> np.ndarray:
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1 and params.spec.output_dim == 1 and n > 1:
        y = y[:, None]
    elif y.ndim == 1:
        y = y[None, :]
    if y.shape != (n, params.spec.output_dim):
        raise ShapeMismatch(f"targets of shape {y.shape} do not match outputs ({n}, {params.spec.output_dim})")
    return y


def mlp_grad(params: MlpParams, inputs, targets) -> List[np.ndarray]:
    """Gradient of ``mse_loss`` with respect to every parameter array."""
    xb, _ = _as_batch(params, inputs)
    if len(xb) == 0:
        raise ShapeMismatch("empty batch")
    yb = _targets_like(params, targets, len(xb))
    cache = _forward_cache(params, xb)
    grad_out = 2.0 * (cache[1][-1] - yb) / len(xb)
    return mlp_backward(params, xb, grad_out, cache)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, **hyper) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **hyper)


def adam_step(state: AdamState, params: MlpParams, grad: Sequence[np.ndarray]) -> Tuple[AdamState, MlpParams]:
    arrays = params.arrays()
    if len(grad) != len(arrays) or any(g.shape != a.shape for g, a in zip(grad, arrays)):
        raise ShapeMismatch("gradient does not match parameter shapes")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m = [b1 * mi + (1 - b1) * g for mi, g in zip(state.m, grad)]
    v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(state.v, grad)]
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    new = [a - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps) for a, mi, vi in zip(arrays, m, v)]
    new_state = AdamState(m, v, t, state.lr, b1, b2, state.eps)
    return new_state, params.with_arrays(new)


def finite_diff_check(params: MlpParams, inputs, targets, h: float = 1e-5) -> float:
    """Largest relative gap between ``mlp_grad`` and central differences of ``mse_loss``."""
    if not h > 0:
        raise InvalidStep(f"finite-difference step must be positive, got {h}")
    analytic = mlp_grad(params, inputs, targets)
    arrays = [a.copy() for a in params.arrays()]
    worst = 0.0
    for k, arr in enumerate(arrays):
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = mse_loss(params.with_arrays(arrays), inputs, targets)
            flat[j] = orig - h
            down = mse_loss(params.with_arrays(arrays), inputs, targets)
            flat[j] = orig
            numeric = (up - down) / (2 * h)
            a = analytic[k].reshape(-1)[j]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst


@dataclass
class TrainLog:
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    steps: int = 0
    history: List[float] = field(default_factory=list)
