"""Gradient-based SVGD, annealing schedules and the surrogate-gradient GF-SVGD baseline.

Particle sets are plain ``(n, d)`` float arrays. Directions are ascent
directions on log p, so a step is ``x + lr * direction``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from . import kernels
from .errors import DegenerateWeights, GradientUnavailable, ScheduleError

SCHEDULE_KINDS = ("constant", "log_clamped", "log_fade")


@dataclass(frozen=True)
class AnnealSchedule:
    kind: str = "constant"
    horizon: int = 1
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if self.horizon < 1:
            raise ScheduleError("schedule horizon must be >= 1")

    def __call__(self, t):
        return gamma(self, t)


def gamma(schedule, t):
    """Repulsion weight at iteration ``t`` (1-based)."""
    T = schedule.horizon
    if not 1 <= t <= T:
        raise ScheduleError(f"iteration {t} outside [1, {T}]")
    if schedule.kind == "constant":
        return float(schedule.value)
    g = math.log(T / t)
    if schedule.kind == "log_clamped":
        return max(g, 1.0)
    return max(g, 0.0)


class Adam:
    """Adaptive-moment ascent step applied row-wise to a particle array."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, direction):
        if self.m is None:
            self.m = np.zeros_like(direction)
            self.v = np.zeros_like(direction)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * direction
        self.v = self.beta2 * self.v + (1 - self.beta2) * direction ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class PlainStep:
    """x <- x + lr * direction."""

    def __init__(self, lr):
        self.lr = float(lr)
        self.t = 0

    def step(self, params, direction):
        self.t += 1
        return params + self.lr * direction


def make_optimizer(kind, lr):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd":
        return PlainStep(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def stein_direction(X, score, h, gamma_t, weights=None):
    """(1/n) sum_j w_j [score_j k(x_j, x_i) + gamma grad_{x_j} k(x_j, x_i)]."""
    n = X.shape[0]
    K = kernels.gram(X, X, h)
    if weights is None:
        return (K @ score + gamma_t * kernels.repulsion(X, h)) / n
    # weighted repulsion: sum_j w_j (x_i - x_j) k_ij / h
    KW = K * weights[None, :]
    rep = (KW.sum(axis=1)[:, None] * X - KW @ X) / h
    return (KW @ score + gamma_t * rep) / n


def svgd_direction(particles, target, h, gamma_t=1.0):
    if not target.has_grad:
        raise GradientUnavailable(f"{target.name} has no closed-form gradient")
    X = np.asarray(particles, dtype=float)
    score = -target.grad(X)
    return stein_direction(X, score, h, gamma_t)


def svgd_step(particles, direction, opt):
    return opt.step(np.asarray(particles, dtype=float), direction)


@dataclass
class GfSvgdConfig:
    """Isotropic Gaussian surrogate N(0, prior_scale * I) and step settings."""

    prior_scale: float = 1.0
    lr: float = 0.1
    optimizer: str = "adam"
    anneal_drive: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.prior_scale > 0:
            raise ValueError("prior_scale (sigma^2) must be positive")


def gfsvgd_weights(X, energies, prior_scale):
    """Self-normalised importance weights rho(x_j) / p~(x_j), mean one, computed in log space."""
    d = X.shape[1]
    log_rho = -0.5 * np.sum(X ** 2, axis=1) / prior_scale - 0.5 * d * math.log(2 * math.pi * prior_scale)
    logw = log_rho + energies
    finite = np.isfinite(logw)
    if not finite.any():
        raise DegenerateWeights("all GF-SVGD log-weights are non-finite")
    if not finite.all():
        # +inf energy means p~ = 0: such a particle dominates, -inf/nan drop out
        pos_inf = np.isposinf(logw)
        if pos_inf.any():
            w = pos_inf.astype(float)
            return w * (len(w) / w.sum())
        logw = np.where(finite, logw, -np.inf)
    w = softmax(logw) * X.shape[0]
    if not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise DegenerateWeights("GF-SVGD weights degenerated")
    return w


def gfsvgd_direction(particles, target, cfg, h, gamma_t=1.0):
    X = np.asarray(particles, dtype=float)
    w = gfsvgd_weights(X, target.energy(X), cfg.prior_scale)
    score = -X / cfg.prior_scale
    if cfg.anneal_drive:
        score = gamma_t * score
    return stein_direction(X, score, h, gamma_t, weights=w)


def gfsvgd_step(particles, target, cfg, h, gamma_t, opt):
    return svgd_step(particles, gfsvgd_direction(particles, target, cfg, h, gamma_t), opt)
