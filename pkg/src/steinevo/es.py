"""CMA-ES, OpenAI-ES gradient estimation and independent parallel CMA-ES runs.

A :class:`CmaState` always carries a leading run axis: ``mean`` is ``(n, d)``,
``cov`` is ``(n, d, d)`` and so on. Vanilla CMA-ES is the ``n == 1`` case;
``n > 1`` holds independent runs (or the per-particle search distributions of
SV-CMA-ES). Each run draws from its own ``numpy.random.Generator``.
"""
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DimError
from .linalg import EigCache, eigen_floor, symmetrize

SIGMA_MIN = 1e-12
SIGMA_MAX = 1e6
MAX_LOG_SIGMA_STEP = 1.0
# largest eigenvalue of C is kept within [1/SCALE_BAND, SCALE_BAND]
SCALE_BAND = 1e8


@dataclass(frozen=True)
class EsWeights:
    m: int
    elite: int
    weights: np.ndarray
    lambda_eff: float

    @property
    def positive(self):
        return self.weights[:self.elite]


def _learning_rates(lambda_eff, dim):
    a_sigma = (lambda_eff + 2.0) / (dim + lambda_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((lambda_eff - 1.0) / (dim + 1.0)) - 1.0) + a_sigma
    a_c = (4.0 + lambda_eff / dim) / (dim + 4.0 + 2.0 * lambda_eff / dim)
    a_1 = 2.0 / ((dim + 1.3) ** 2 + lambda_eff)
    a_lam = min(1.0 - a_1, 2.0 * (lambda_eff - 2.0 + 1.0 / lambda_eff) / ((dim + 2.0) ** 2 + lambda_eff))
    return a_sigma, d_sigma, a_c, a_1, a_lam


def cma_weights(m, elite, dim):
    """Rank-based recombination weights with ``elite`` positive entries.

    Raw weights are ``ln((m+1)/2) - ln(i)``. The first ``elite`` are
    normalised to sum one. Ranks past ``elite`` whose raw weight is still
    positive get zero; the negative tail is rescaled to the usual
    active-CMA budget.
    """
    m, elite = int(m), int(elite)
    if not 1 <= elite <= m:
        raise ConfigError(f"elite count must satisfy 1 <= elite <= m, got elite={elite}, m={m}")
    ranks = np.arange(1, m + 1, dtype=float)
    raw = math.log((m + 1) / 2.0) - np.log(ranks)
    if raw[elite - 1] <= 0.0:
        # ln((m+1)/2) leaves no positive mass for this many elites
        raw[:elite] = math.log(elite + 0.5) - np.log(ranks[:elite])
    pos = raw[:elite] / raw[:elite].sum()
    lambda_eff = 1.0 / float(np.sum(pos ** 2))

    w = np.zeros(m)
    w[:elite] = pos
    neg_raw = np.where(raw[elite:] < 0.0, raw[elite:], 0.0)
    if np.any(neg_raw < 0.0):
        _, _, _, a_1, a_lam = _learning_rates(lambda_eff, dim)
        lambda_eff_neg = neg_raw.sum() ** 2 / np.sum(neg_raw ** 2)
        bounds = [1.0 + 2.0 * lambda_eff_neg / (lambda_eff + 2.0)]
        if a_lam > 0.0:
            bounds += [1.0 + a_1 / a_lam, (1.0 - a_1 - a_lam) / (dim * a_lam)]
        budget = min(bounds)
        w[elite:] = neg_raw * (budget / np.abs(neg_raw).sum())
    return EsWeights(m=m, elite=elite, weights=w, lambda_eff=lambda_eff)


@dataclass(frozen=True)
class CmaParams:
    alpha_x: float
    alpha_sigma: float
    d_sigma: float
    alpha_c: float
    alpha_1: float
    alpha_lambda: float
    chi_d: float

    @classmethod
    def default(cls, weights, dim, alpha_x=1.0):
        a_sigma, d_sigma, a_c, a_1, a_lam = _learning_rates(weights.lambda_eff, dim)
        return cls(alpha_x=float(alpha_x), alpha_sigma=a_sigma, d_sigma=d_sigma, alpha_c=a_c,
                   alpha_1=a_1, alpha_lambda=a_lam, chi_d=expected_norm(dim))


def expected_norm(dim):
    """E||N(0, I)|| ~= sqrt(d) (1 - 1/(4d) + 1/(21 d^2))."""
    return math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim ** 2))


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: np.ndarray
    cov: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    eig: EigCache
    generation: int = 0

    @classmethod
    def initial(cls, mean, sigma, cov=None):
        mean = np.array(mean, dtype=float)
        if mean.ndim == 1:
            mean = mean[None, :]
        n, d = mean.shape
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,)).copy()
        if cov is None:
            cov = np.broadcast_to(np.eye(d), (n, d, d)).copy()
            eig = EigCache(basis=cov.copy(), scales=np.ones((n, d)), stamp=0)
        else:
            cov = np.broadcast_to(np.asarray(cov, dtype=float), (n, d, d)).copy()
            cov, eig = _floored(cov, 0)
        return cls(mean=mean, sigma=sigma, cov=cov, path_sigma=np.zeros((n, d)),
                   path_c=np.zeros((n, d)), eig=eig, generation=0)

    @property
    def n(self):
        return self.mean.shape[0]

    @property
    def dim(self):
        return self.mean.shape[1]

    def row(self, i):
        """Run ``i`` as a standalone single-run state."""
        sl = slice(i, i + 1)
        eig = EigCache(self.eig.basis[sl].copy(), self.eig.scales[sl].copy(), self.eig.stamp)
        return CmaState(self.mean[sl].copy(), self.sigma[sl].copy(), self.cov[sl].copy(),
                        self.path_sigma[sl].copy(), self.path_c[sl].copy(), eig, self.generation)

    def take(self, idx):
        idx = np.asarray(idx)
        eig = EigCache(self.eig.basis[idx].copy(), self.eig.scales[idx].copy(), self.eig.stamp)
        return CmaState(self.mean[idx].copy(), self.sigma[idx].copy(), self.cov[idx].copy(),
                        self.path_sigma[idx].copy(), self.path_c[idx].copy(), eig, self.generation)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in
                   (self.mean, self.sigma, self.cov, self.path_sigma, self.path_c))


@dataclass
class Subpopulation:
    """Sorted samples: ``xi``/``y`` are ``(n, m, d)``, ``fitness`` ``(n, m)`` ascending per run."""

    xi: np.ndarray
    y: np.ndarray
    fitness: np.ndarray
    order: np.ndarray


def _floored(cov, stamp):
    cov = symmetrize(cov)
    w, B = np.linalg.eigh(cov)
    floor = eigen_floor(w)
    clipped = w < floor
    if np.any(clipped):
        w = np.maximum(w, floor)
        rows = np.any(clipped, axis=-1)
        rebuilt = symmetrize(np.matmul(B * w[..., None, :], np.swapaxes(B, -1, -2)))
        cov = np.where(rows[:, None, None], rebuilt, cov)
    return cov, EigCache(basis=B, scales=np.sqrt(w), stamp=stamp)


def _as_rngs(rng, n):
    if isinstance(rng, np.random.Generator):
        if n != 1:
            raise ValueError("a single Generator can only drive a single run; pass one per run")
        return [rng]
    rngs = list(rng)
    if len(rngs) != n:
        raise ValueError(f"expected {n} generators, got {len(rngs)}")
    return rngs


def draw_standard(state, m, rng):
    """Per-run draws ``y = B diag(D) z`` with ``z`` from each run's generator, shape ``(n, m, d)``."""
    rngs = _as_rngs(rng, state.n)
    z = np.stack([g.standard_normal((m, state.dim)) for g in rngs])
    return np.matmul(z * state.eig.scales[:, None, :], np.swapaxes(state.eig.basis, -1, -2))


def sample_subpop(state, m, rng, target):
    y = draw_standard(state, m, rng)
    xi = state.mean[:, None, :] + state.sigma[:, None, None] * y
    n, d = state.n, state.dim
    fit = np.asarray(target.energy(xi.reshape(n * m, d)), dtype=float).reshape(n, m)
    order = np.argsort(fit, axis=1, kind="stable")
    take = np.take_along_axis
    return Subpopulation(xi=take(xi, order[:, :, None], axis=1),
                         y=take(y, order[:, :, None], axis=1),
                         fitness=take(fit, order, axis=1),
                         order=order)


def recombine(sub, w):
    """Elite-weighted normalised step ``sum_{k <= elite} w_k y_k``, shape ``(n, d)``."""
    return np.einsum("k,nkd->nd", w.positive, sub.y[:, :w.elite, :])


def recombine_mean(state, sub, w, p):
    yhat = recombine(sub, w)
    return state.mean + p.alpha_x * state.sigma[:, None] * yhat, yhat


def _whiten(eig, v):
    """C^{-1/2} v for stacked caches; ``v`` is ``(n, ..., d)``."""
    B, D = eig.basis, eig.scales
    extra = v.ndim - 2
    Bt_v = np.einsum("nij,n...i->n...j", B, v)
    Dn = D.reshape((D.shape[0],) + (1,) * extra + (D.shape[1],))
    return np.einsum("nij,n...j->n...i", B, Bt_v / Dn)


def csa_update(state, yhat, w, p, clip=True):
    """Cumulative step-size adaptation; returns ``(path_sigma, sigma)``."""
    coef = math.sqrt(p.alpha_sigma * (2.0 - p.alpha_sigma) * w.lambda_eff)
    ps = (1.0 - p.alpha_sigma) * state.path_sigma + coef * _whiten(state.eig, yhat)
    norm = np.linalg.norm(ps, axis=1)
    # growth is capped at a factor e per generation, shrinking is not
    step = np.minimum((p.alpha_sigma / p.d_sigma) * (norm / p.chi_d - 1.0), MAX_LOG_SIGMA_STEP)
    sigma = state.sigma * np.exp(step)
    return ps, (np.clip(sigma, SIGMA_MIN, SIGMA_MAX) if clip else sigma)


def _cov_update(state, sub, yhat, w, p):
    d = state.dim
    t = state.generation
    norm_ps = np.linalg.norm(state.path_sigma, axis=1)
    hbar = norm_ps / math.sqrt(1.0 - (1.0 - p.alpha_sigma) ** (2 * (t + 1)))
    h_sigma = (hbar < (1.4 + 2.0 / (d + 1.0)) * p.chi_d).astype(float)
    d_h = (p.alpha_c * (1.0 - h_sigma) * (2.0 - p.alpha_c) <= 1.0).astype(float)

    wts = np.broadcast_to(w.weights, (state.n, w.m))
    if np.any(w.weights < 0.0):
        sq = np.sum(_whiten(state.eig, sub.y) ** 2, axis=-1)
        # a zero sample contributes a zero outer product whatever its weight
        safe = np.where(sq > 0.0, sq, 1.0)
        wbar = np.where(wts >= 0.0, wts, np.where(sq > 0.0, wts * d / safe, 0.0))
    else:
        wbar = wts

    pc = (1.0 - p.alpha_c) * state.path_c + (
        h_sigma * math.sqrt(p.alpha_c * (2.0 - p.alpha_c) * w.lambda_eff))[:, None] * yhat
    decay = 1.0 + p.alpha_1 * d_h - p.alpha_1 - p.alpha_lambda * w.weights.sum()
    rank_one = pc[:, :, None] * pc[:, None, :]
    rank_mu = np.einsum("nk,nki,nkj->nij", wbar, sub.y, sub.y)
    C = decay[:, None, None] * state.cov + p.alpha_1 * rank_one + p.alpha_lambda * rank_mu
    C, eig = _floored(C, t + 1)
    return pc, C, eig


def cov_update(state, sub, yhat, w, p):
    """Rank-one plus rank-mu covariance update; expects ``state.path_sigma`` already updated."""
    pc, C, _ = _cov_update(state, sub, yhat, w, p)
    return pc, C


def rebalance(sigma, C, eig, pc):
    """Move overall scale between sigma and C without changing sigma^2 C.

    Only the product sigma^2 C is observable, yet the two factors can drift
    apart exponentially. When the largest eigenvalue of C leaves
    [1/SCALE_BAND, SCALE_BAND] it is divided by s = 4^k (and p_c by 2^k,
    sigma multiplied by 2^k), which is exact in binary floating point and
    leaves every later sample and path-length test unchanged.
    """
    top = eig.scales.max(axis=1) ** 2
    out = (top > SCALE_BAND) | (top < 1.0 / SCALE_BAND)
    if not np.any(out):
        return sigma, C, eig, pc
    # new top lands in [1, 4), where the relative eigenvalue floor carries over unchanged
    k = np.where(out, np.floor(np.log2(top) / 2.0), 0.0)
    r = np.exp2(k)
    eig = EigCache(basis=eig.basis, scales=eig.scales / r[:, None], stamp=eig.stamp)
    return sigma * r, C / (r * r)[:, None, None], eig, pc / r[:, None]


def advance(state, sub, yhat, w, p):
    """Shift the means by ``alpha_x sigma yhat`` then adapt sigma and C from ``yhat``."""
    mean = state.mean + p.alpha_x * state.sigma[:, None] * yhat
    ps, sigma = csa_update(state, yhat, w, p, clip=False)
    mid = replace(state, path_sigma=ps)
    pc, C, eig = _cov_update(mid, sub, yhat, w, p)
    sigma, C, eig, pc = rebalance(sigma, C, eig, pc)
    sigma = np.clip(sigma, SIGMA_MIN, SIGMA_MAX)
    return CmaState(mean=mean, sigma=sigma, cov=C, path_sigma=ps, path_c=pc, eig=eig,
                    generation=state.generation + 1)


def cma_step(state, target, m, w, p, rng):
    """One CMA-ES generation for every run in ``state``.

    Returns ``(new_state, subpopulation)``.
    """
    if w.m != m:
        raise ConfigError(f"weights built for m={w.m}, population is {m}")
    sub = sample_subpop(state, m, rng, target)
    yhat = recombine(sub, w)
    return advance(state, sub, yhat, w, p), sub


def independent_parallel_step(state, target, m, w, p, rngs):
    """n uncoordinated CMA-ES runs; identical to :func:`cma_step` on the stacked state."""
    return cma_step(state, target, m, w, p, rngs)


# --- OpenAI-ES -------------------------------------------------------------

def centered_ranks(f):
    """Average ranks mapped linearly onto [-0.5, 0.5] along the last axis."""
    f = np.asarray(f, dtype=float)
    m = f.shape[-1]
    if m < 2:
        return np.zeros_like(f)
    r = rankdata(f, method="average", axis=-1)
    return (r - 1.0) / (m - 1.0) - 0.5


def openes_grads(X, zeta, m, target, rng, shaping="rank"):
    """Antithetic Monte-Carlo estimates of grad f at every row of ``X``.

    ``rng`` is one Generator per row (or a single Generator for one row).
    ``shaping="rank"`` replaces fitness by centered ranks, ``"raw"`` keeps f.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if m < 2 or m % 2:
        raise ConfigError(f"OpenAI-ES needs an even subpopulation size, got {m}")
    if not zeta > 0:
        raise ConfigError("noise scale zeta must be positive")
    half = m // 2
    rngs = _as_rngs(rng, n)
    eps = np.stack([g.standard_normal((half, d)) for g in rngs])
    pts = np.concatenate([X[:, None, :] + zeta * eps, X[:, None, :] - zeta * eps], axis=1)
    f = np.asarray(target.energy(pts.reshape(n * m, d)), dtype=float).reshape(n, m)
    if shaping == "rank":
        F = centered_ranks(f)
    elif shaping == "raw":
        F = f
    else:
        raise ValueError(f"unknown fitness shaping {shaping!r}")
    diff = F[:, :half] - F[:, half:]
    return np.einsum("nk,nkd->nd", diff, eps) / (m * zeta)


def openes_grad(x, zeta, m, target, rng, shaping="rank"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimError("openes_grad expects a single point; use openes_grads for batches")
    return openes_grads(x[None, :], zeta, m, target, rng, shaping)[0]
