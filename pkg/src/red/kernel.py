"""Kernel-PCA support estimation.

A point is scored by the squared norm of the part of its feature embedding
that falls outside the span of the top-m kernel principal directions of the
training set: ``k(x, x) - K_x^T U diag(1/lambda) U^T K_x``. Scores are near
zero on the training support and approach 1 far away from it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from red.errors import DegenerateData, InvalidThreshold, NoComponents, ShapeMismatch

FORMAT_VERSION = 1
AUTO_TRACE_FRACTION = 0.999


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    exponent_form: str = "euclidean_norm"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.exponent_form not in ("euclidean_norm", "squared_norm"):
            raise ValueError(f"unknown exponent_form {self.exponent_form!r}")


def _dist_to_kernel(dist: np.ndarray, spec: KernelSpec) -> np.ndarray:
    if spec.exponent_form == "squared_norm":
        return np.exp(-(dist**2) / spec.bandwidth)
    return np.exp(-dist / spec.bandwidth)


def gaussian_kernel(x, x_prime, spec: KernelSpec) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=np.float64))
    if x.shape != x_prime.shape:
        raise ShapeMismatch(f"kernel arguments have shapes {x.shape} and {x_prime.shape}")
    return float(_dist_to_kernel(np.linalg.norm(x - x_prime), spec))


def kernel_matrix(a: np.ndarray, b: np.ndarray, spec: KernelSpec) -> np.ndarray:
    return _dist_to_kernel(cdist(a, b), spec)


def median_bandwidth(X) -> float:
    """Median pairwise Euclidean distance between rows of ``X``."""
    X = _as_points(X)
    if len(X) < 2:
        raise DegenerateData("need at least two points for a median bandwidth")
    sigma = float(np.median(pdist(X)))
    if sigma == 0.0:
        raise DegenerateData("median pairwise distance is zero")
    return sigma


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


@dataclass
class KernelSupportModel:
    x: np.ndarray
    spec: KernelSpec
    eigvals: np.ndarray
    eigvecs: np.ndarray
    ridge: float

    kind = "kernel"

    @property
    def m(self) -> int:
        return len(self.eigvals)

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def descriptor(self) -> str:
        return f"kernel(sigma={self.spec.bandwidth:.6g}, m={self.m}, form={self.spec.exponent_form})"

    def score(self, x) -> float:
        return kernel_score(self, x)

    def score_batch(self, X) -> np.ndarray:
        X = _as_points(X)
        if X.shape[1] != self.input_dim:
            raise ShapeMismatch(f"expected dim {self.input_dim}, got {X.shape[1]}")
        kx = kernel_matrix(self.x, X, self.spec)  # (N, B)
        proj = self.eigvecs.T @ kx  # (m, B)
        inside = np.sum(proj * proj / self.eigvals[:, None], axis=0)
        # k(x, x) == 1 for both exponent forms
        return np.clip(1.0 - inside, 0.0, 1.0)

    def truncated(self, m: int) -> "KernelSupportModel":
        """Same model keeping only the leading ``m`` components."""
        return KernelSupportModel(self.x, self.spec, self.eigvals[:m], self.eigvecs[:, :m], self.ridge)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spec": {"bandwidth": self.spec.bandwidth, "exponent_form": self.spec.exponent_form},
            "x": self.x.tolist(),
            "m": self.m,
            "eigvals": self.eigvals.tolist(),
            "eigvecs": self.eigvecs.tolist(),
            "ridge": self.ridge,
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSupportModel":
        m = int(d["m"])
        return cls(
            x=np.asarray(d["x"], dtype=np.float64),
            spec=KernelSpec(**d["spec"]),
            eigvals=np.asarray(d["eigvals"], dtype=np.float64)[:m],
            eigvecs=np.asarray(d["eigvecs"], dtype=np.float64).reshape(-1, m),
            ridge=float(d["ridge"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_kernel_support(
    X,
    spec: KernelSpec,
    m: Union[int, str] = "auto",
    ridge: float | None = None,
) -> KernelSupportModel:
    """Eigendecompose the training kernel matrix and keep the leading components.

    ``ridge`` defaults to ``1e-10 * lambda_max``; only eigenvalues strictly above
    it are ever retained. ``m="auto"`` keeps the fewest components that capture
    99.9% of the trace.
    """
    X = _as_points(X)
    n = len(X)
    if n < 1:
        raise DegenerateData("no training points")
    K = kernel_matrix(X, X, spec)
    vals, vecs = np.linalg.eigh(K)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if ridge is None:
        ridge = 1e-10 * max(vals[0], 0.0)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if m == "auto":
        captured = np.cumsum(vals) / np.trace(K)
        keep = int(np.searchsorted(captured, AUTO_TRACE_FRACTION) + 1)
    else:
        keep = int(m)
        if not 1 <= keep <= n:
            raise ValueError(f"m must lie in [1, {n}], got {m}")
    keep = min(keep, n)
    above = int(np.sum(vals[:keep] > ridge))
    if above == 0:
        raise NoComponents(f"no eigenvalue exceeds ridge {ridge:g}")
    return KernelSupportModel(X.copy(), spec, vals[:above].copy(), vecs[:, :above].copy(), float(ridge))


def kernel_score(model: KernelSupportModel, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (model.input_dim,):
        raise ShapeMismatch(f"expected a vector of dim {model.input_dim}, got shape {x.shape}")
    return float(model.score_batch(x[None, :])[0])


def membership(model: KernelSupportModel, x, tau: float) -> bool:
    if not tau > 0:
        raise InvalidThreshold(f"threshold must be positive, got {tau}")
    return kernel_score(model, x) <= tau
