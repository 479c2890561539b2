"""Dense symmetric linear algebra for the CMA covariance machinery.

All functions accept a single ``(d, d)`` matrix or a stack ``(..., d, d)``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimError, InvalidMatrix

EIGEN_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class EigCache:
    """Factorisation ``C = B diag(D**2) B^T`` of a symmetric matrix."""

    basis: np.ndarray
    scales: np.ndarray
    stamp: int = 0

    @property
    def dim(self):
        return self.scales.shape[-1]


def symmetrize(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def eigen_floor(eigvals):
    """Smallest admissible eigenvalue: 1e-12 * max(1, largest eigenvalue)."""
    top = np.max(eigvals, axis=-1, keepdims=True)
    return EIGEN_FLOOR_REL * np.maximum(1.0, top)


def sym_eig(m, stamp=0):
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimError(f"expected square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix has non-finite entries")
    w, B = np.linalg.eigh(m)
    w = np.maximum(w, eigen_floor(w))
    return EigCache(basis=B, scales=np.sqrt(w), stamp=stamp)


def reconstruct(cache):
    B, D = cache.basis, cache.scales
    return symmetrize(np.matmul(B * (D * D)[..., None, :], np.swapaxes(B, -1, -2)))


def inv_sqrt(cache):
    B, D = cache.basis, cache.scales
    return symmetrize(np.matmul(B * (1.0 / D)[..., None, :], np.swapaxes(B, -1, -2)))


def standard_draws(cache, z):
    """Map standard normals ``z[..., d]`` to ``B diag(D) z`` (covariance C)."""
    return np.matmul(z * cache.scales, cache.basis.T)


def mvn_sample(mean, sigma, cache, rng, size=None):
    """Draw ``mean + sigma * B diag(D) z`` with ``z ~ N(0, I)`` from ``rng``.

    ``size`` adds leading sample axes; ``None`` returns a single vector.
    Only single (unstacked) caches are supported here.
    """
    mean = np.asarray(mean, dtype=float)
    if cache.basis.ndim != 2:
        raise DimError("mvn_sample expects an unstacked EigCache")
    if mean.shape != (cache.dim,):
        raise DimError(f"mean has shape {mean.shape}, cache dimension is {cache.dim}")
    shape = (cache.dim,) if size is None else tuple(np.atleast_1d(size)) + (cache.dim,)
    z = rng.standard_normal(shape)
    return mean + sigma * standard_draws(cache, z)
