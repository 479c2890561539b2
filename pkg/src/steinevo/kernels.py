"""RBF kernel k(x, y) = exp(-||x - y||^2 / (2h)), its gradient, and bandwidth policies."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel
from .errors import DegenerateSamples, DimError


def _as_points(X):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _check_pair(x, y, h):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return x, y


def rbf_eval(x, y, h):
    x, y = _check_pair(x, y, h)
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * h)))


def rbf_grad(x, y, h):
    """Gradient of k(x, y) with respect to its first argument."""
    x, y = _check_pair(x, y, h)
    return -(x - y) / h * np.exp(-np.sum((x - y) ** 2) / (2.0 * h))


def gram(X, Y, h):
    X, Y = _as_points(X), _as_points(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return _accel.rbf_gram(X, Y, float(h))


def repulsion(X, h):
    """Row i holds sum_j grad_{x_j} k(x_j, x_i) over the whole particle set."""
    return _accel.rbf_repulsion(_as_points(X), float(h))


def median_bandwidth(reference):
    """Median of squared pairwise distances ``||x_i - x_j||^2`` over ``i < j``."""
    X = _as_points(reference)
    if X.shape[0] < 2:
        raise DegenerateSamples("median heuristic needs at least two samples")
    D = _accel.pairwise_sqdist(X, X)
    iu = np.triu_indices(X.shape[0], k=1)
    h = float(np.median(D[iu]))
    if h <= 0.0:
        if np.all(D[iu] == 0.0):
            raise DegenerateSamples("all reference samples are identical")
        # more than half the pairs coincide; fall back to the positive distances
        h = float(np.median(D[iu][D[iu] > 0.0]))
    return h


@dataclass
class KernelSpec:
    """Bandwidth policy: a fixed ``h`` or the median heuristic on a reference set."""

    h: Optional[float] = None
    reference: Optional[np.ndarray] = None
    resolved_h: Optional[float] = None

    def __post_init__(self):
        if self.h is None and self.reference is None:
            raise ValueError("KernelSpec needs either a fixed h or a reference set")
        if self.h is not None and not self.h > 0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")

    @classmethod
    def fixed(cls, h):
        return cls(h=float(h))

    @classmethod
    def median(cls, reference):
        return cls(reference=np.asarray(reference, dtype=float))

    def resolve(self):
        if self.resolved_h is None:
            self.resolved_h = self.h if self.h is not None else median_bandwidth(self.reference)
        return self.resolved_h
