import math

import numpy as np
import pytest

from steinevo.errors import DimError
from steinevo.rl import (EXPECTED_PARAMS, EnvSpec, MlpPolicy, RLTarget, env_step, expected_return,
                         mlp_forward, rollout_returns)


def oracle_forward(sizes, theta, obs):
    h = np.asarray(obs, dtype=float)
    pos = 0
    for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = theta[pos:pos + a * b].reshape(a, b)
        pos += a * b
        bias = theta[pos:pos + b]
        pos += b
        h = h @ W + bias
        h = np.tanh(h) if li == len(sizes) - 2 else np.maximum(h, 0.0)
    return h


def loop_return(spec, theta, state):
    pol = spec.policy()
    total = 0.0
    for _ in range(spec.max_steps):
        a = oracle_forward(pol.sizes, theta, spec.observe(state))
        state, r, done = env_step(spec, state, a)
        total += r
        if done:
            break
    return total


# --- policy -----------------------------------------------------------------------------

def test_parameter_counts():
    assert EnvSpec.pendulum().policy().n_params == 353 == 3 * 16 + 16 + 16 * 16 + 16 + 16 + 1
    assert EnvSpec.mountaincar().policy().n_params == 337 == 2 * 16 + 16 + 16 * 16 + 16 + 16 + 1
    assert EXPECTED_PARAMS == {"pendulum": 353, "mountaincar_cont": 337}


def test_zero_parameters_give_zero_action(rng):
    pol = MlpPolicy.for_env(3, 1)
    np.testing.assert_array_equal(mlp_forward(pol, np.zeros(pol.n_params), rng.standard_normal(3)), [0.0])


def test_forward_matches_oracle(rng):
    pol = MlpPolicy.for_env(3, 2)
    for _ in range(5):
        theta = rng.standard_normal(pol.n_params)
        obs = rng.standard_normal((7, 3))
        np.testing.assert_allclose(mlp_forward(pol, theta, obs), oracle_forward(pol.sizes, theta, obs),
                                   rtol=0, atol=1e-12)


def test_output_saturates_monotonically(rng):
    pol = MlpPolicy.for_env(2, 1)
    theta = rng.standard_normal(pol.n_params)
    obs = rng.standard_normal(2)
    last = slice(pol.n_params - 17, pol.n_params)
    prev = mlp_forward(pol, theta, obs)[0]
    for _ in range(4):
        theta[last] *= 10.0
        out = mlp_forward(pol, theta, obs)[0]
        assert abs(out) >= abs(prev) and np.sign(out) == np.sign(prev)
        prev = out
    assert abs(prev) > 0.999


def test_forward_dim_errors():
    pol = MlpPolicy.for_env(3, 1)
    with pytest.raises(DimError):
        mlp_forward(pol, np.zeros(10), np.zeros(3))
    with pytest.raises(DimError):
        mlp_forward(pol, np.zeros(pol.n_params), np.zeros(2))
    with pytest.raises(ValueError):
        MlpPolicy((3,))


# --- dynamics ------------------------------------------------------------------------------

def test_pendulum_upright_rest():
    spec = EnvSpec.pendulum()
    s = np.array([0.0, 0.0])
    for _ in range(10):
        s, r, done = env_step(spec, s, [0.0])
        assert r == 0.0 and not done
    np.testing.assert_array_equal(s, [0.0, 0.0])


def test_pendulum_reward_formula():
    spec = EnvSpec.pendulum()
    _, r, _ = env_step(spec, np.array([3.0, 1.5]), [0.5])
    assert r == pytest.approx(-(3.0 ** 2 + 0.1 * 1.5 ** 2 + 0.001 * 1.0 ** 2))
    _, r, _ = env_step(spec, np.array([2 * math.pi + 0.2, 0.0]), [0.0])
    assert r == pytest.approx(-0.04)


def test_pendulum_energy_drift_small_dt():
    spec = EnvSpec("pendulum", max_steps=1, obs_dim=3, dt=1e-4)
    k = 3.0 * spec.g / (2.0 * spec.length)
    s = np.array([1.0, 0.0])
    e0 = 0.5 * s[1] ** 2 + k * math.cos(s[0])
    prev = e0
    for _ in range(5000):
        s, _, _ = env_step(spec, s, [0.0])
        e = 0.5 * s[1] ** 2 + k * math.cos(s[0])
        assert abs(e - prev) <= 0.01 * abs(prev)
        prev = e
    assert abs(prev - e0) <= 0.01 * abs(e0)


def test_mountaincar_idle_return_zero(rng):
    spec = EnvSpec.mountaincar()
    pol = spec.policy()
    assert expected_return(spec, np.zeros(pol.n_params), 8, rng) == 0.0
    assert loop_return(spec, np.zeros(pol.n_params), np.array([-0.5, 0.0])) == 0.0


def test_mountaincar_goal_bonus():
    spec = EnvSpec.mountaincar()
    s, r, done = env_step(spec, np.array([0.449, 0.02]), [1.0])
    assert done and r == pytest.approx(100.0 - 0.1)
    s, _, _ = env_step(spec, np.array([-1.2, -0.05]), [-1.0])
    assert s[0] == -1.2 and s[1] == 0.0


def test_bang_bang_policy_reaches_goal():
    # push in the direction of the velocity; a classic swing-up heuristic
    spec = EnvSpec.mountaincar()
    s, total = np.array([-0.5, 0.0]), 0.0
    for _ in range(spec.max_steps):
        s, r, done = env_step(spec, s, [1.0 if s[1] >= 0 else -1.0])
        total += r
        if done:
            break
    assert done and total > 50


# --- batched rollouts -------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["pendulum", "mountaincar"])
def test_batched_rollout_matches_step_loop(name, rng):
    spec = EnvSpec.by_name(name)
    P = spec.policy().n_params
    thetas = rng.standard_normal((3, P)) * 0.5
    init = spec.initial_states(rng, (3, 2))
    got = rollout_returns(spec, thetas, init)
    for k in range(3):
        for r in range(2):
            assert got[k, r] == pytest.approx(loop_return(spec, thetas[k], init[k, r]), rel=1e-9, abs=1e-9)


def test_expected_return_deterministic():
    spec = EnvSpec.pendulum()
    theta = np.random.default_rng(1).standard_normal(spec.policy().n_params)
    a = expected_return(spec, theta, 4, np.random.default_rng(3))
    b = expected_return(spec, theta, 4, np.random.default_rng(3))
    assert a == b
    with pytest.raises(ValueError):
        expected_return(spec, theta, 0, np.random.default_rng(3))


def test_pendulum_return_range(rng):
    t = RLTarget("pendulum", n_rollouts=4, seed=0)
    J = t.returns(rng.standard_normal((64, t.dim)))
    assert np.all((J >= -2000.0) & (J <= 0.0))


def test_initial_state_ranges(rng):
    p = EnvSpec.pendulum().initial_states(rng, (1000,))
    assert np.all(np.abs(p[:, 0]) <= math.pi) and np.all(np.abs(p[:, 1]) <= 1.0)
    m = EnvSpec.mountaincar().initial_states(rng, (1000,))
    assert np.all((m[:, 0] >= -0.6) & (m[:, 0] <= -0.4)) and np.all(m[:, 1] == 0.0)


# --- RL target ---------------------------------------------------------------------------------

def test_rltarget_energy_is_negative_return(rng):
    X = rng.standard_normal((5, 353)) * 0.3
    a, b = RLTarget("pendulum", 4, seed=7), RLTarget("pendulum", 4, seed=7)
    np.testing.assert_array_equal(a.energy(X), -b.returns(X))
    assert a.eval_counter == 5


def test_rltarget_common_random_numbers(rng):
    X = rng.standard_normal((4, 353)) * 0.3
    full = RLTarget("pendulum", 4, seed=2).energy(X)
    single = np.array([RLTarget("pendulum", 4, seed=2).energy(x) for x in X])
    np.testing.assert_array_equal(full, single)


def test_rltarget_replay_is_bit_exact(rng):
    X = rng.standard_normal((3, 337))
    runs = []
    for _ in range(2):
        t = RLTarget("mountaincar", 4, seed=5)
        runs.append([t.energy(X), t.energy(X)])
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    np.testing.assert_array_equal(runs[0][1], runs[1][1])


def test_unknown_env():
    with pytest.raises(ValueError):
        EnvSpec.by_name("cartpole")
