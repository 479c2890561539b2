"""Sample-quality metrics, Metropolis-Hastings ground truth and gradient checking."""
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DimError, SingleSample
from .kernels import _as_points


@dataclass(frozen=True)
class MmdReport:
    mmd2: float
    bandwidth: float
    sizes: tuple


def mmd2_biased(X, Y, h):
    """Biased (V-statistic) squared MMD with the RBF kernel, diagonals included."""
    X, Y = _as_points(X), _as_points(Y)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("both sample sets must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise DimError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    val = float(_accel.mmd2_vstat(X, Y, float(h)))
    return MmdReport(mmd2=val, bandwidth=float(h), sizes=(X.shape[0], Y.shape[0]))


def moment_mse(X, truth_mean, truth_var):
    """Mean squared error of the empirical mean and (unbiased) variance across coordinates."""
    X = _as_points(X)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    mse_mean = float(np.mean((X.mean(axis=0) - np.asarray(truth_mean, dtype=float)) ** 2))
    if X.shape[0] < 2:
        raise SingleSample("variance is undefined for a single sample")
    mse_var = float(np.mean((X.var(axis=0, ddof=1) - np.asarray(truth_var, dtype=float)) ** 2))
    return mse_mean, mse_var


@dataclass
class MhResult:
    samples: np.ndarray
    acceptance_rate: np.ndarray
    proposal_scale: float


def _mh_chains(target, x, steps, scale, rng):
    f = np.asarray(target.energy(x), dtype=float)
    accepted = np.zeros(x.shape[0])
    for _ in range(steps):
        prop = x + scale * rng.standard_normal(x.shape)
        fp = np.asarray(target.energy(prop), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            log_u = np.log(rng.uniform(size=x.shape[0]))
            acc = log_u < (f - fp)
        acc &= np.isfinite(fp)
        x = np.where(acc[:, None], prop, x)
        f = np.where(acc, fp, f)
        accepted += acc
    return x, accepted / max(steps, 1)


def tune_proposal(target, x0, rng, scale=1.0, pilot_steps=1000, low=0.2, high=0.5, max_rounds=30):
    """Halve or double the proposal scale until a pilot run accepts within [low, high]."""
    x = np.array(x0, dtype=float)
    for _ in range(max_rounds):
        x_new, rate = _mh_chains(target, x, pilot_steps, scale, rng)
        r = float(np.mean(rate))
        if r < low:
            scale *= 0.5
        elif r > high:
            scale *= 2.0
        else:
            return scale, x_new
        x = x_new
    return scale, x


def mh_sample(target, n_chains, burn_in, proposal_scale, rng, x0=None, tune=False):
    """Random-walk Metropolis with one independent chain per returned sample.

    Each chain runs ``burn_in`` steps with proposal N(0, scale^2 I) and only
    its final state is kept.
    """
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    x = rng.standard_normal((n_chains, target.dim)) if x0 is None else np.array(x0, dtype=float)
    scale = float(proposal_scale)
    if tune:
        scale, x = tune_proposal(target, x, rng, scale)
    x, rate = _mh_chains(target, x, burn_in, scale, rng)
    return MhResult(samples=x, acceptance_rate=rate, proposal_scale=scale)


def finite_diff_grad(target, x, step=1e-5):
    """Central differences of ``target.energy`` (or any callable) at ``x``."""
    x = np.asarray(x, dtype=float)
    fn = target.energy if hasattr(target, "energy") else target
    E = np.eye(x.size) * step
    pts = np.concatenate([x[None, :] + E, x[None, :] - E])
    f = np.asarray(fn(pts), dtype=float)
    return (f[:x.size] - f[x.size:]) / (2.0 * step)


def relative_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


# --- ground-truth cache (JSONL, one record per sample) ---------------------

def write_ground_truth(path, task, seed, samples):
    with open(path, "w", encoding="utf-8") as fh:
        for x in np.atleast_2d(samples):
            fh.write(json.dumps({"task": task, "seed": int(seed), "x": [float(v) for v in x]}) + "\n")


def read_ground_truth(path, task=None, seed=None):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if task is not None and rec["task"] != task:
                continue
            if seed is not None and rec["seed"] != seed:
                continue
            out.append(rec["x"])
    return np.array(out, dtype=float)


def gaussian_moments_match(X, mean, var):
    """True when the empirical moments coincide exactly with ``mean``/``var``."""
    mm, mv = moment_mse(X, mean, var)
    return math.isclose(mm, 0.0, abs_tol=1e-24) and math.isclose(mv, 0.0, abs_tol=1e-24)
