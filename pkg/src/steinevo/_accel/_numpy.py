"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in ``_numba.py`` with the same signature.
"""
import numpy as np


def pairwise_sqdist(X, Y):
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def rbf_gram(X, Y, h):
    return np.exp(-pairwise_sqdist(X, Y) / (2.0 * h))


def rbf_repulsion(X, h):
    # row i: sum_j grad_{x_j} k(x_j, x_i) = sum_j (x_i - x_j) k_ij / h
    K = rbf_gram(X, X, h)
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ij,ijk->ik", K, diff) / h


def mmd2_vstat(X, Y, h):
    kxx = rbf_gram(X, X, h).mean()
    kyy = rbf_gram(Y, Y, h).mean()
    kxy = rbf_gram(X, Y, h).mean()
    return kxx + kyy - 2.0 * kxy


def _unflatten(params, sizes):
    layers = []
    off = 0
    K = params.shape[0]
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = params[:, off:off + a * b].reshape(K, a, b)
        off += a * b
        bias = params[:, off:off + b]
        off += b
        layers.append((W, bias))
    return layers


def mlp_batch(params, sizes, obs):
    """Forward pass for K parameter vectors over obs of shape (K, R, in)."""
    layers = _unflatten(params, sizes)
    h = obs
    for i, (W, b) in enumerate(layers):
        h = np.matmul(h, W) + b[:, None, :]
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return np.tanh(h)


def _angle_normalize(x):
    return ((x + np.pi) % (2.0 * np.pi)) - np.pi


def rollout_pendulum(params, sizes, init, max_steps, dt, g, mass, length,
                     max_torque, max_speed):
    th = init[..., 0].copy()
    thdot = init[..., 1].copy()
    ret = np.zeros(th.shape)
    for _ in range(max_steps):
        obs = np.stack([np.cos(th), np.sin(th), thdot], axis=-1)
        u = mlp_batch(params, sizes, obs)[..., 0] * max_torque
        ret -= _angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        thdot = thdot + (3.0 * g / (2.0 * length) * np.sin(th)
                         + 3.0 / (mass * length ** 2) * u) * dt
        thdot = np.clip(thdot, -max_speed, max_speed)
        th = th + thdot * dt
    return ret


def rollout_mountaincar(params, sizes, init, max_steps, power):
    pos = init[..., 0].copy()
    vel = init[..., 1].copy()
    ret = np.zeros(pos.shape)
    alive = np.ones(pos.shape, dtype=bool)
    for _ in range(max_steps):
        if not alive.any():
            break
        obs = np.stack([pos, vel], axis=-1)
        u = mlp_batch(params, sizes, obs)[..., 0]
        vel_new = vel + u * power - 0.0025 * np.cos(3.0 * pos)
        vel_new = np.clip(vel_new, -0.07, 0.07)
        pos_new = np.clip(pos + vel_new, -1.2, 0.6)
        vel_new = np.where((pos_new <= -1.2) & (vel_new < 0.0), 0.0, vel_new)
        done = (pos_new >= 0.45) & (vel_new >= 0.0)
        reward = -0.1 * u ** 2 + 100.0 * done
        ret += np.where(alive, reward, 0.0)
        pos = np.where(alive, pos_new, pos)
        vel = np.where(alive, vel_new, vel)
        alive &= ~done
    return ret
