"""Unnormalised target densities p(x) = exp(-f(x)) / Z, expressed through the energy f.

Every target evaluates batches: ``energy`` takes ``(d,)`` or ``(k, d)`` and
returns a float or a ``(k,)`` array. ``eval_counter`` counts evaluated points
(energy or gradient), which is what the harness uses for budget parity.
"""
import csv
import math
import threading
from importlib import resources

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from .errors import DatasetError, DimError, GradientUnavailable, InvalidBase

LOG_2PI = math.log(2.0 * math.pi)
BANANA_CAP = 1e12


class TargetDensity:
    """Base class. Subclasses implement ``_energy`` and optionally ``_grad``."""

    dim: int = 0
    name: str = "target"

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_counter(self):
        return self._count

    def _tick(self, k):
        with self._lock:
            self._count += k

    @property
    def has_grad(self):
        return type(self)._grad is not TargetDensity._grad

    def _prepare(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimError(f"{self.name}: expected points of dimension {self.dim}, got shape {x.shape}")
        return X, single

    def energy(self, x):
        X, single = self._prepare(x)
        self._tick(X.shape[0])
        f = self._energy(X)
        return float(f[0]) if single else f

    def grad(self, x):
        X, single = self._prepare(x)
        if not self.has_grad:
            raise GradientUnavailable(f"{self.name} has no closed-form gradient")
        self._tick(X.shape[0])
        _, g = self._grad(X)
        return g[0] if single else g

    def energy_and_grad(self, x):
        X, single = self._prepare(x)
        if not self.has_grad:
            raise GradientUnavailable(f"{self.name} has no closed-form gradient")
        self._tick(X.shape[0])
        f, g = self._grad(X)
        return (float(f[0]), g[0]) if single else (f, g)

    def _energy(self, X):
        raise NotImplementedError

    def _grad(self, X):
        raise NotImplementedError


class GaussianMixtureTarget(TargetDensity):
    """p(x) = (1/K) sum_i w_i N(x; mu_i, I) with K = sum_i w_i."""

    name = "gmm"

    def __init__(self, means, weights):
        super().__init__()
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (self.means.shape[0],):
            raise DimError("one weight per mixture component required")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        self.dim = self.means.shape[1]
        self.normalizer = float(self.weights.sum())
        self._logw = np.log(self.weights)

    @classmethod
    def random(cls, seed, n_modes=4, dim=2, low=-6.0, high=6.0, max_weight=10.0):
        rng = np.random.default_rng(seed)
        means = rng.uniform(low, high, size=(n_modes, dim))
        weights = rng.uniform(0.0, max_weight, size=n_modes)
        # uniform(0, 10) can return exactly 0 in principle; keep weights positive
        weights = np.maximum(weights, np.finfo(float).tiny)
        return cls(means, weights)

    def _log_terms(self, X):
        diff = X[:, None, :] - self.means[None, :, :]
        sq = np.einsum("kij,kij->ki", diff, diff)
        return self._logw - 0.5 * sq - 0.5 * self.dim * LOG_2PI, diff

    def _energy(self, X):
        terms, _ = self._log_terms(X)
        return -logsumexp(terms, axis=1) + math.log(self.normalizer)

    def _grad(self, X):
        terms, diff = self._log_terms(X)
        lse = logsumexp(terms, axis=1)
        resp = np.exp(terms - lse[:, None])
        return -lse + math.log(self.normalizer), np.einsum("ki,kij->kj", resp, diff)

    def sample(self, k, rng):
        comp = rng.choice(len(self.weights), size=k, p=self.weights / self.normalizer)
        return self.means[comp] + rng.standard_normal((k, self.dim))

    def mean(self):
        return (self.weights / self.normalizer) @ self.means

    def variance(self):
        p = self.weights / self.normalizer
        mu = self.mean()
        return 1.0 + p @ (self.means ** 2) - mu ** 2


class DoubleBananaTarget(TargetDensity):
    """f(x) = ||x||^2 / (2 s1) + (y - F(x))^2 / (2 s2), F(x) = log((1-x1)^2 + 100 (x2-x1^2)^2)."""

    name = "banana"
    dim = 2

    def __init__(self, y=math.log(30.0), sigma1=1.0, sigma2=0.09):
        super().__init__()
        self.y = float(y)
        self.sigma1 = float(sigma1)
        self.sigma2 = float(sigma2)

    def _parts(self, X):
        x1, x2 = X[:, 0], X[:, 1]
        r = x2 - x1 ** 2
        g = (1.0 - x1) ** 2 + 100.0 * r ** 2
        return x1, r, g

    def _energy(self, X):
        _, _, g = self._parts(X)
        bad = g <= 0.0
        with np.errstate(divide="ignore"):
            F = np.log(np.where(bad, 1.0, g))
        f = np.sum(X ** 2, axis=1) / (2 * self.sigma1) + (self.y - F) ** 2 / (2 * self.sigma2)
        return np.where(bad, BANANA_CAP, f)

    def _grad(self, X):
        x1, r, g = self._parts(X)
        bad = g <= 0.0
        gs = np.where(bad, 1.0, g)
        F = np.log(gs)
        f = np.sum(X ** 2, axis=1) / (2 * self.sigma1) + (self.y - F) ** 2 / (2 * self.sigma2)
        dg = np.stack([-2.0 * (1.0 - x1) - 400.0 * x1 * r, 200.0 * r], axis=1)
        coef = -(self.y - F) / self.sigma2 / gs
        grad = X / self.sigma1 + coef[:, None] * dg
        grad[bad] = 0.0
        return np.where(bad, BANANA_CAP, f), grad


def halton(index, base):
    """Radical inverse of ``index`` in ``base``."""
    if base < 2:
        raise InvalidBase(f"base must be >= 2, got {base}")
    if index < 1:
        raise ValueError(f"index must be >= 1, got {index}")
    out, scale = 0.0, 1.0
    while index > 0:
        index, digit = divmod(index, base)
        scale /= base
        out += digit * scale
    return out


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


def halton_points(n, dim=2, start=1):
    return np.array([[halton(i, _PRIMES[j]) for j in range(dim)] for i in range(start, start + n)])


class MotionPlanningTarget(TargetDensity):
    """Waypoint density over a Halton-generated obstacle terrain.

    The cost of a path is ``sum_t p_collision(x_t) + alpha * sum_t ||x_t - x_{t-1}||``
    over the chain ``start, x_1..x_T, goal``. ``sign="negated"`` uses the cost
    as energy (p proportional to exp(-cost)); ``sign="as_printed"`` uses
    p proportional to exp(+cost), which is not integrable.
    """

    name = "motionplan"

    def __init__(self, n_waypoints=5, n_obstacles=15, obstacle_scale=0.25, alpha=1.0,
                 start=(-0.9, -0.9), goal=(0.9, 0.9), sign="negated", halton_offset=0,
                 box=(-1.0, 1.0)):
        super().__init__()
        if sign not in ("negated", "as_printed"):
            raise ValueError(f"sign must be 'negated' or 'as_printed', got {sign!r}")
        self.n_waypoints = int(n_waypoints)
        self.dim = 2 * self.n_waypoints
        lo, hi = box
        self.obstacles = lo + (hi - lo) * halton_points(n_obstacles, 2, start=1 + halton_offset)
        self.obstacle_scale = float(obstacle_scale)
        self.alpha = float(alpha)
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.sign = sign

    def _chain(self, X):
        W = X.reshape(X.shape[0], self.n_waypoints, 2)
        k = X.shape[0]
        full = np.concatenate([np.broadcast_to(self.start, (k, 1, 2)), W,
                               np.broadcast_to(self.goal, (k, 1, 2))], axis=1)
        return W, np.diff(full, axis=1)

    def _collision(self, W):
        s2 = self.obstacle_scale ** 2
        diff = W[:, :, None, :] - self.obstacles[None, None, :, :]
        dens = np.exp(-np.sum(diff ** 2, axis=-1) / (2 * s2)) / (2 * math.pi * s2)
        K = self.obstacles.shape[0]
        return dens.sum(axis=2) / K, diff, dens

    def collision_density(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p, _, _ = self._collision(pts[None, :, :])
        return p[0]

    def _cost(self, X):
        W, seg = self._chain(X)
        p, diff, dens = self._collision(W)
        lengths = np.linalg.norm(seg, axis=-1)
        return p.sum(axis=1) + self.alpha * lengths.sum(axis=1), W, seg, lengths, diff, dens

    def _energy(self, X):
        cost = self._cost(X)[0]
        return cost if self.sign == "negated" else -cost

    def _grad(self, X):
        cost, W, seg, lengths, diff, dens = self._cost(X)
        K = self.obstacles.shape[0]
        g_coll = -np.einsum("ktj,ktjc->ktc", dens, diff) / (self.obstacle_scale ** 2 * K)
        safe = np.where(lengths > 0.0, lengths, 1.0)
        unit = np.where(lengths[..., None] > 0.0, seg / safe[..., None], 0.0)
        # segment t connects node t to node t+1; waypoint w is node w+1
        g_len = self.alpha * (unit[:, :-1, :] - unit[:, 1:, :])
        g = (g_coll + g_len).reshape(X.shape[0], self.dim)
        if self.sign == "negated":
            return cost, g
        return -cost, -g


class LogRegTarget(TargetDensity):
    """Bayesian logistic regression with beta ~ N(0, 1/alpha), alpha ~ Gamma(a0, rate b0).

    Parameters are ``theta = [beta (d), log alpha]``; the log-Jacobian of the
    log transform is part of the energy. The likelihood is evaluated on the
    current minibatch and scaled by N / |batch|.
    """

    name = "logreg"

    def __init__(self, X_train, y_train, X_val=None, y_val=None, X_test=None, y_test=None,
                 a0=1.0, b0=0.01, batch_size=128):
        super().__init__()
        self.X_train = np.asarray(X_train, dtype=float)
        self.y_train = np.asarray(y_train, dtype=float)
        self.X_val = None if X_val is None else np.asarray(X_val, dtype=float)
        self.y_val = None if y_val is None else np.asarray(y_val, dtype=float)
        self.X_test = None if X_test is None else np.asarray(X_test, dtype=float)
        self.y_test = None if y_test is None else np.asarray(y_test, dtype=float)
        self.n_features = self.X_train.shape[1]
        self.dim = self.n_features + 1
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.batch_size = int(batch_size)
        self.batch = None

    def resample_batch(self, rng):
        n = self.X_train.shape[0]
        if self.batch_size >= n:
            self.batch = None
        else:
            self.batch = np.sort(rng.choice(n, size=self.batch_size, replace=False))
        return self.batch

    def log_gamma_prior(self, alpha):
        a0, b0 = self.a0, self.b0
        return a0 * math.log(b0) - gammaln(a0) + (a0 - 1.0) * np.log(alpha) - b0 * alpha

    def _data(self, batch):
        if batch is None:
            return self.X_train, self.y_train, 1.0
        batch = np.asarray(batch)
        if batch.size < 1:
            raise ValueError("batch must contain at least one index")
        return self.X_train[batch], self.y_train[batch], self.X_train.shape[0] / batch.size

    def _terms(self, X, batch):
        Xd, yd, scale = self._data(batch)
        beta, u = X[:, :-1], X[:, -1]
        z = beta @ Xd.T
        s = 2.0 * yd - 1.0
        loglik = -np.logaddexp(0.0, -s * z).sum(axis=1)
        alpha = np.exp(u)
        d = self.n_features
        sq = np.sum(beta ** 2, axis=1)
        log_prior_beta = 0.5 * d * u - 0.5 * d * LOG_2PI - 0.5 * alpha * sq
        log_prior_alpha = (self.a0 * math.log(self.b0) - gammaln(self.a0)
                           + (self.a0 - 1.0) * u - self.b0 * alpha)
        f = -scale * loglik - log_prior_beta - log_prior_alpha - u
        return f, Xd, yd, scale, beta, z, alpha, sq

    def _energy(self, X):
        return self.energy_batch(X, self.batch)

    def _grad(self, X):
        return self.energy_grad_batch(X, self.batch)

    def energy_batch(self, X, batch):
        with np.errstate(over="ignore", invalid="ignore"):
            f = self._terms(X, batch)[0]
        return np.where(np.isnan(f), np.inf, f)

    def energy_grad_batch(self, X, batch):
        f, Xd, yd, scale, beta, z, alpha, sq = self._terms(X, batch)
        resid = yd[None, :] - expit(z)
        g_beta = -scale * resid @ Xd + alpha[:, None] * beta
        d = self.n_features
        g_u = -0.5 * d + 0.5 * alpha * sq - (self.a0 - 1.0) + self.b0 * alpha - 1.0
        return f, np.concatenate([g_beta, g_u[:, None]], axis=1)

    def predict_proba(self, thetas, X):
        thetas = np.atleast_2d(thetas)
        return expit(X @ thetas[:, :-1].T).mean(axis=1)

    def accuracy(self, thetas, split="test"):
        X = getattr(self, f"X_{split}")
        y = getattr(self, f"y_{split}")
        if X is None:
            raise ValueError(f"no {split} split available")
        pred = self.predict_proba(thetas, X) > 0.5
        return float(np.mean(pred == (y > 0.5)))


def logreg_energy(target, theta, batch):
    """Energy and gradient of ``target`` on an explicit minibatch (does not count evals)."""
    X = np.atleast_2d(np.asarray(theta, dtype=float))
    f, g = target.energy_grad_batch(X, batch)
    if np.ndim(theta) == 1:
        return float(f[0]), g[0]
    return f, g


class SphereTarget(TargetDensity):
    name = "sphere"

    def __init__(self, dim):
        super().__init__()
        self.dim = int(dim)

    def _energy(self, X):
        return np.sum(X ** 2, axis=1)

    def _grad(self, X):
        return np.sum(X ** 2, axis=1), 2.0 * X


class RosenbrockTarget(TargetDensity):
    name = "rosenbrock"

    def __init__(self, dim):
        super().__init__()
        if dim < 2:
            raise DimError("rosenbrock needs dim >= 2")
        self.dim = int(dim)

    def _energy(self, X):
        a, b = X[:, :-1], X[:, 1:]
        return np.sum(100.0 * (b - a ** 2) ** 2 + (1.0 - a) ** 2, axis=1)

    def _grad(self, X):
        a, b = X[:, :-1], X[:, 1:]
        g = np.zeros_like(X)
        g[:, :-1] += -400.0 * a * (b - a ** 2) - 2.0 * (1.0 - a)
        g[:, 1:] += 200.0 * (b - a ** 2)
        return self._energy(X), g


class ShiftedTarget(TargetDensity):
    """Wraps a target as ``g(f(x - offset))``; used for invariance checks."""

    def __init__(self, base, offset=None, transform=None):
        super().__init__()
        self.base = base
        self.dim = base.dim
        self.name = f"shifted-{base.name}"
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        self.transform = transform

    def _energy(self, X):
        f = self.base._energy(X - self.offset)
        return f if self.transform is None else self.transform(f)


def gmm_energy(t, x):
    return t.energy_and_grad(x)


def banana_energy(t, x):
    return t.energy_and_grad(x)


def motionplan_energy(t, x):
    return t.energy_and_grad(x)


def test_objectives(name, x):
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    if name == "sphere":
        return SphereTarget(dim).energy_and_grad(x)
    if name == "rosenbrock":
        return RosenbrockTarget(dim).energy_and_grad(x)
    raise ValueError(f"unknown test objective {name!r}")


test_objectives.__test__ = False  # keep pytest from collecting it


# --- datasets -------------------------------------------------------------

def _parse_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def read_dataset_csv(path):
    """Parse a label-first CSV. Returns ``(X, y)``."""
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        n_features = None
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and _parse_float(row[0].strip()) is None:
                continue  # header
            if len(row) < 2:
                raise DatasetError("expected a label and at least one feature", row=lineno)
            vals = [_parse_float(c.strip()) for c in row]
            if any(v is None for v in vals):
                raise DatasetError("non-numeric cell", row=lineno)
            if not all(math.isfinite(v) for v in vals):
                raise DatasetError("non-finite value", row=lineno)
            if vals[0] not in (0.0, 1.0):
                raise DatasetError(f"label must be 0 or 1, got {row[0]!r}", row=lineno)
            if n_features is None:
                n_features = len(vals) - 1
            elif len(vals) - 1 != n_features:
                raise DatasetError(f"expected {n_features} features, got {len(vals) - 1}", row=lineno)
            labels.append(vals[0])
            rows.append(vals[1:])
    if len(rows) < 10:
        raise DatasetError(f"need at least 10 data rows, found {len(rows)}")
    return np.array(rows), np.array(labels)


def split_sizes(n, ratios=(0.7, 0.1, 0.2)):
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return n_train, n_val, n - n_train - n_val


def load_dataset(path, split_seed, batch_size=128, a0=1.0, b0=0.01):
    """Load, shuffle-split 70/10/20 and standardise with training statistics."""
    X, y = read_dataset_csv(path)
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(X.shape[0])
    n_train, n_val, _ = split_sizes(X.shape[0])
    tr, va, te = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    mu = X[tr].mean(axis=0)
    sd = X[tr].std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def z(a):
        return (a - mu) / sd

    return LogRegTarget(z(X[tr]), y[tr], z(X[va]), y[va], z(X[te]), y[te],
                        a0=a0, b0=b0, batch_size=batch_size)


def bundled_dataset_path():
    return str(resources.files("steinevo") / "data" / "synthetic_logreg.csv")


def make_separable_dataset(n=500, d=5, seed=20240601, margin=0.1):
    """Linearly separable data through the origin: y = 1[w . x > 0], |w . x| >= margin."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    X = np.empty((0, d))
    while X.shape[0] < n:
        cand = rng.standard_normal((2 * n, d))
        keep = np.abs(cand @ w) >= margin
        X = np.vstack([X, cand[keep]])
    X = X[:n]
    y = (X @ w > 0).astype(float)
    return X, y, w


def write_dataset_csv(path, X, y, header=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["label"] + [f"x{i + 1}" for i in range(X.shape[1])])
        for xi, yi in zip(X, y):
            writer.writerow([int(yi)] + [repr(float(v)) for v in xi])
