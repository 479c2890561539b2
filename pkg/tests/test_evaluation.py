import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinevo.errors import DimError, SingleSample
from steinevo.evaluation import (finite_diff_grad, gaussian_moments_match, mh_sample, mmd2_biased,
                                 moment_mse, read_ground_truth, relative_error, tune_proposal,
                                 write_ground_truth)
from steinevo.kernels import median_bandwidth
from steinevo.targets import DoubleBananaTarget, GaussianMixtureTarget, SphereTarget, TargetDensity


class DoubleWell(TargetDensity):
    name = "double-well"
    dim = 1

    def _energy(self, X):
        return (X[:, 0] ** 2 - 4.0) ** 2 / 2.0


def brute_mmd(X, Y, h):
    def k(a, b):
        return math.exp(-float(np.sum((a - b) ** 2)) / (2 * h))
    xx = sum(k(a, b) for a in X for b in X) / len(X) ** 2
    yy = sum(k(a, b) for a in Y for b in Y) / len(Y) ** 2
    xy = sum(k(a, b) for a in X for b in Y) / (len(X) * len(Y))
    return xx + yy - 2 * xy


# --- MMD ------------------------------------------------------------------------------

def test_mmd_same_set_is_zero(rng):
    X = rng.standard_normal((40, 3))
    assert abs(mmd2_biased(X, X, 0.8).mmd2) <= 1e-12


def test_mmd_two_points():
    r = mmd2_biased([[0.0, 0.0]], [[math.sqrt(2.0), 0.0]], 1.0)
    assert r.mmd2 == pytest.approx(2 - 2 * math.exp(-1), abs=1e-14)
    assert r.mmd2 == pytest.approx(1.2642, abs=1e-4)
    assert r.sizes == (1, 1) and r.bandwidth == 1.0


def test_mmd_matches_double_loop(rng):
    X, Y = rng.standard_normal((50, 2)), rng.standard_normal((50, 2)) + 0.5
    assert mmd2_biased(X, Y, 0.9).mmd2 == pytest.approx(brute_mmd(X, Y, 0.9), abs=1e-12)


@given(arrays(np.float64, (7, 2), elements=st.floats(-5, 5)),
       arrays(np.float64, (5, 2), elements=st.floats(-5, 5)),
       st.permutations(range(7)))
def test_mmd_symmetry_permutation_nonneg(X, Y, perm):
    a = mmd2_biased(X, Y, 1.3).mmd2
    assert a == pytest.approx(mmd2_biased(Y, X, 1.3).mmd2, abs=1e-12)
    assert a == pytest.approx(mmd2_biased(X[list(perm)], Y, 1.3).mmd2, abs=1e-12)
    assert a >= -1e-12


def test_mmd_errors():
    with pytest.raises(DimError):
        mmd2_biased(np.zeros((3, 2)), np.zeros((3, 3)), 1.0)
    with pytest.raises(ValueError):
        mmd2_biased(np.zeros((0, 2)), np.zeros((3, 2)), 1.0)


def test_target_samples_beat_displaced_prior(rng):
    t = GaussianMixtureTarget.random(0)
    gt = t.sample(256, rng)
    h = median_bandwidth(gt)
    own = mmd2_biased(t.sample(256, rng), gt, h).mmd2
    prior = mmd2_biased(rng.standard_normal((256, 2)) + 5.0, gt, h).mmd2
    assert own < prior


# --- moments ----------------------------------------------------------------------------

def test_moment_mse_exact():
    assert moment_mse([[-1.0], [1.0]], [0.0], [2.0]) == (0.0, 0.0)
    assert gaussian_moments_match(np.array([[-1.0], [1.0]]), [0.0], [2.0])


def test_moment_mse_values():
    X = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    mm, mv = moment_mse(X, [0.0, 0.0], [0.0, 0.0])
    assert mm == pytest.approx((4 + 9) / 2)
    assert mv == pytest.approx(16.0)


def test_moment_mse_single_sample():
    with pytest.raises(SingleSample):
        moment_mse([[1.0, 2.0]], [0.0, 0.0], [1.0, 1.0])


def test_moment_mse_gmm(rng):
    t = GaussianMixtureTarget.random(2)
    mm, _ = moment_mse(t.sample(10_000, rng), t.mean(), t.variance())
    assert mm < 0.01


# --- Metropolis-Hastings -----------------------------------------------------------------

def test_mh_zero_scale_never_moves(rng):
    x0 = rng.standard_normal((8, 2))
    r = mh_sample(SphereTarget(2), 8, 50, 0.0, rng, x0=x0)
    np.testing.assert_array_equal(r.samples, x0)
    np.testing.assert_array_equal(r.acceptance_rate, 1.0)


def test_mh_gaussian_moments(rng):
    t = GaussianMixtureTarget([[0.0]], [1.0])
    r = mh_sample(t, 256, 10_000, 1.0, rng)
    assert abs(r.samples.mean()) < 0.15
    assert abs(r.samples.var(ddof=1) - 1.0) < 0.2
    assert np.all((r.acceptance_rate > 0.4) & (r.acceptance_rate < 0.9))


def test_mh_double_well_symmetry(rng):
    r = mh_sample(DoubleWell(), 512, 2000, 0.5, rng)
    frac = np.mean(r.samples[:, 0] > 0)
    assert 0.4 <= frac <= 0.6
    assert np.mean(np.abs(np.abs(r.samples[:, 0]) - 2.0) < 1.0) > 0.95


def test_mh_rejects_negative_burn_in(rng):
    with pytest.raises(ValueError):
        mh_sample(SphereTarget(1), 2, -1, 1.0, rng)


def test_tune_proposal_hits_band(rng):
    t = GaussianMixtureTarget([[0.0, 0.0]], [1.0])
    x0 = rng.standard_normal((64, 2))
    scale, _ = tune_proposal(t, x0, rng, scale=50.0, pilot_steps=200)
    r = mh_sample(t, 64, 500, scale, rng, x0=x0).acceptance_rate.mean()
    assert 0.15 <= r <= 0.55
    assert scale < 50.0


# --- finite differences --------------------------------------------------------------------

def test_fd_sphere():
    np.testing.assert_allclose(finite_diff_grad(SphereTarget(2), [1.0, 2.0], 1e-5), [2.0, 4.0], atol=1e-8)


def test_fd_linear_callable():
    c = np.array([0.5, -1.5, 2.0])
    g = finite_diff_grad(lambda X: X @ c, np.array([0.1, 0.2, 0.3]), 1e-5)
    np.testing.assert_allclose(g, c, rtol=1e-9)


def test_fd_banana_cross_check(rng):
    t = DoubleBananaTarget()
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 2)
        assert relative_error(finite_diff_grad(t, x, 1e-5), t.grad(x)) <= 1e-5


# --- ground-truth cache ----------------------------------------------------------------------

def test_ground_truth_round_trip(tmp_path, rng):
    X = rng.standard_normal((5, 3))
    path = tmp_path / "gt.jsonl"
    write_ground_truth(path, "gmm", 4, X)
    np.testing.assert_array_equal(read_ground_truth(path), X)
    np.testing.assert_array_equal(read_ground_truth(path, task="gmm", seed=4), X)
    assert read_ground_truth(path, task="banana").size == 0
    first = path.read_text().splitlines()[0]
    assert first.startswith('{"task": "gmm", "seed": 4, "x": [')
