"""Classic-control policy search: Pendulum and continuous MountainCar with MLP policies.

The sampler energy is ``f(theta) = -J(theta)`` where ``J`` is the mean
episodic return over a batch of seeded rollouts, so high return means high
density.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DimError
from .targets import TargetDensity

HIDDEN = (16, 16)
EXPECTED_PARAMS = {"pendulum": 353, "mountaincar_cont": 337}


@dataclass(frozen=True)
class MlpPolicy:
    """Flat-parameter MLP: ReLU hidden layers, tanh output.

    Per layer the parameter vector holds the ``in x out`` weight matrix
    (row-major) followed by the ``out`` biases.
    """

    sizes: tuple

    def __post_init__(self):
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.sizes}")

    @classmethod
    def for_env(cls, obs_dim, act_dim, hidden=HIDDEN):
        return cls(sizes=(obs_dim, *hidden, act_dim))

    @property
    def n_params(self):
        return sum((a + 1) * b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def obs_dim(self):
        return self.sizes[0]

    @property
    def act_dim(self):
        return self.sizes[-1]

    def sizes_array(self):
        return np.asarray(self.sizes, dtype=np.int64)


def mlp_forward(policy, theta, obs):
    """Action(s) in [-1, 1] for one observation or a batch of observations."""
    theta = np.asarray(theta, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if theta.shape[-1] != policy.n_params:
        raise DimError(f"expected {policy.n_params} parameters, got {theta.shape[-1]}")
    if obs.shape[-1] != policy.obs_dim:
        raise DimError(f"expected observation dim {policy.obs_dim}, got {obs.shape[-1]}")
    o = obs.reshape(1, -1, policy.obs_dim)
    out = _accel.mlp_batch(np.ascontiguousarray(theta.reshape(1, -1)), policy.sizes_array(),
                           np.ascontiguousarray(o))
    return out.reshape(obs.shape[:-1] + (policy.act_dim,))


@dataclass(frozen=True)
class EnvSpec:
    name: str
    max_steps: int
    obs_dim: int
    act_dim: int = 1
    dt: float = 0.05
    g: float = 10.0
    mass: float = 1.0
    length: float = 1.0
    max_torque: float = 2.0
    max_speed: float = 8.0
    power: float = 0.0015

    @classmethod
    def pendulum(cls, max_steps=200):
        return cls(name="pendulum", max_steps=max_steps, obs_dim=3)

    @classmethod
    def mountaincar(cls, max_steps=500):
        return cls(name="mountaincar_cont", max_steps=max_steps, obs_dim=2)

    @classmethod
    def by_name(cls, name):
        if name == "pendulum":
            return cls.pendulum()
        if name in ("mountaincar", "mountaincar_cont"):
            return cls.mountaincar()
        raise ValueError(f"unknown environment {name!r}")

    def policy(self):
        return MlpPolicy.for_env(self.obs_dim, self.act_dim)

    def observe(self, state):
        state = np.asarray(state, dtype=float)
        if self.name == "pendulum":
            return np.array([math.cos(state[0]), math.sin(state[0]), state[1]])
        return state.copy()

    def initial_states(self, rng, shape):
        if self.name == "pendulum":
            th = rng.uniform(-math.pi, math.pi, size=shape)
            thdot = rng.uniform(-1.0, 1.0, size=shape)
            return np.stack([th, thdot], axis=-1)
        pos = rng.uniform(-0.6, -0.4, size=shape)
        return np.stack([pos, np.zeros(shape)], axis=-1)


def _angle_normalize(x):
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


def env_step(spec, state, action):
    """One transition. ``action`` is the raw policy output in [-1, 1]."""
    a = float(np.asarray(action, dtype=float).reshape(-1)[0])
    if spec.name == "pendulum":
        th, thdot = float(state[0]), float(state[1])
        u = a * spec.max_torque
        reward = -(_angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
        thdot = thdot + (3.0 * spec.g / (2.0 * spec.length) * math.sin(th)
                         + 3.0 / (spec.mass * spec.length ** 2) * u) * spec.dt
        thdot = min(max(thdot, -spec.max_speed), spec.max_speed)
        th = th + thdot * spec.dt
        return np.array([th, thdot]), reward, False
    pos, vel = float(state[0]), float(state[1])
    vel = vel + a * spec.power - 0.0025 * math.cos(3.0 * pos)
    vel = min(max(vel, -0.07), 0.07)
    pos = min(max(pos + vel, -1.2), 0.6)
    if pos <= -1.2 and vel < 0.0:
        vel = 0.0
    done = pos >= 0.45 and vel >= 0.0
    reward = -0.1 * a ** 2 + (100.0 if done else 0.0)
    return np.array([pos, vel]), reward, done


def rollout_returns(spec, thetas, init):
    """Episodic returns for parameters ``(K, P)`` and initial states ``(K, R, 2)``."""
    thetas = np.ascontiguousarray(np.atleast_2d(thetas), dtype=float)
    init = np.ascontiguousarray(init, dtype=float)
    sizes = spec.policy().sizes_array()
    if spec.name == "pendulum":
        return _accel.rollout_pendulum(thetas, sizes, init, spec.max_steps, spec.dt, spec.g,
                                       spec.mass, spec.length, spec.max_torque, spec.max_speed)
    return _accel.rollout_mountaincar(thetas, sizes, init, spec.max_steps, spec.power)


def expected_return(spec, theta, n_rollouts, rng):
    """Mean return of ``theta`` over ``n_rollouts`` episodes with initial states from ``rng``."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    init = spec.initial_states(rng, (1, n_rollouts))
    return float(rollout_returns(spec, theta, init)[0].sum() / n_rollouts)


class RLTarget(TargetDensity):
    """Energy ``-J(theta)`` over policy parameters.

    Each energy call draws fresh initial states from a counter-based stream
    ``default_rng([seed, call_index])``; every candidate of the call sees
    the same ``n_rollouts`` start states (common random numbers), which keeps
    a whole generation consistent and the result independent of how
    candidates are batched across threads.
    """

    def __init__(self, env, n_rollouts=16, seed=0):
        super().__init__()
        self.spec = EnvSpec.by_name(env) if isinstance(env, str) else env
        self.policy = self.spec.policy()
        self.dim = self.policy.n_params
        expected = EXPECTED_PARAMS.get(self.spec.name)
        if expected is not None and self.dim != expected:
            raise AssertionError(f"{self.spec.name}: {self.dim} policy parameters, expected {expected}")
        self.n_rollouts = int(n_rollouts)
        self.seed = int(seed)
        self.calls = 0
        self.name = self.spec.name

    def returns(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rng = np.random.default_rng([self.seed, self.calls])
        self.calls += 1
        init = self.spec.initial_states(rng, (1, self.n_rollouts))
        init = np.ascontiguousarray(np.broadcast_to(init, (X.shape[0], self.n_rollouts, 2)))
        return rollout_returns(self.spec, X, init).sum(axis=1) / self.n_rollouts

    def _energy(self, X):
        return -self.returns(X)
