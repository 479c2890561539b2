"""numba-compiled twins of the kernels in ``_numpy.py``.

Parallel loops only run over independent rows/episodes, so results do not
depend on the thread count.
"""
import math
import os

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old; prefer OpenMP, then the built-in queue
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True)
def pairwise_sqdist(X, Y):
    n, d = X.shape
    k = Y.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            s = 0.0
            for c in range(d):
                t = X[i, c] - Y[j, c]
                s += t * t
            out[i, j] = s
    return out


@njit(cache=True)
def rbf_gram(X, Y, h):
    D = pairwise_sqdist(X, Y)
    return np.exp(-D / (2.0 * h))


@njit(cache=True)
def rbf_repulsion(X, h):
    n, d = X.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(n):
            s = 0.0
            for c in range(d):
                t = X[i, c] - X[j, c]
                s += t * t
            kij = math.exp(-s / (2.0 * h))
            for c in range(d):
                out[i, c] += kij * (X[i, c] - X[j, c])
    return out / h


@njit(cache=True)
def _gram_mean(X, Y, h):
    n = X.shape[0]
    k = Y.shape[0]
    d = X.shape[1]
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(k):
            s = 0.0
            for c in range(d):
                t = X[i, c] - Y[j, c]
                s += t * t
            row += math.exp(-s / (2.0 * h))
        total += row
    return total / (n * k)


@njit(cache=True)
def mmd2_vstat(X, Y, h):
    return _gram_mean(X, X, h) + _gram_mean(Y, Y, h) - 2.0 * _gram_mean(X, Y, h)


@njit(cache=True)
def _mlp_action(theta, sizes, obs, buf_a, buf_b):
    n_layers = sizes.shape[0] - 1
    for c in range(sizes[0]):
        buf_a[c] = obs[c]
    off = 0
    for layer in range(n_layers):
        a = sizes[layer]
        b = sizes[layer + 1]
        for o in range(b):
            buf_b[o] = theta[off + a * b + o]
        for i in range(a):
            xi = buf_a[i]
            base = off + i * b
            for o in range(b):
                buf_b[o] += xi * theta[base + o]
        off += a * b + b
        last = layer == n_layers - 1
        for o in range(b):
            v = buf_b[o]
            if not last and v < 0.0:
                v = 0.0
            buf_a[o] = v
    return math.tanh(buf_a[0])


@njit(cache=True)
def mlp_batch(params, sizes, obs):
    K, R, _ = obs.shape
    out_dim = sizes[-1]
    width = sizes.max()
    out = np.empty((K, R, out_dim))
    buf_a = np.empty(width)
    buf_b = np.empty(width)
    n_layers = sizes.shape[0] - 1
    for k in range(K):
        for r in range(R):
            for c in range(sizes[0]):
                buf_a[c] = obs[k, r, c]
            off = 0
            for layer in range(n_layers):
                a = sizes[layer]
                b = sizes[layer + 1]
                for o in range(b):
                    buf_b[o] = params[k, off + a * b + o]
                for i in range(a):
                    xi = buf_a[i]
                    base = off + i * b
                    for o in range(b):
                        buf_b[o] += xi * params[k, base + o]
                off += a * b + b
                last = layer == n_layers - 1
                for o in range(b):
                    v = buf_b[o]
                    if not last and v < 0.0:
                        v = 0.0
                    buf_a[o] = v
            for o in range(out_dim):
                out[k, r, o] = math.tanh(buf_a[o])
    return out


@njit(cache=True)
def _angle_normalize(x):
    two_pi = 2.0 * math.pi
    y = (x + math.pi) % two_pi
    if y < 0.0:
        y += two_pi
    return y - math.pi


@njit(cache=True, parallel=True)
def rollout_pendulum(params, sizes, init, max_steps, dt, g, mass, length,
                     max_torque, max_speed):
    K, R, _ = init.shape
    ret = np.zeros((K, R))
    width = sizes.max()
    for e in prange(K * R):
        k = e // R
        r = e % R
        buf_a = np.empty(width)
        buf_b = np.empty(width)
        obs = np.empty(3)
        th = init[k, r, 0]
        thdot = init[k, r, 1]
        total = 0.0
        for _ in range(max_steps):
            obs[0] = math.cos(th)
            obs[1] = math.sin(th)
            obs[2] = thdot
            u = _mlp_action(params[k], sizes, obs, buf_a, buf_b) * max_torque
            an = _angle_normalize(th)
            total -= an * an + 0.1 * thdot * thdot + 0.001 * u * u
            thdot = thdot + (3.0 * g / (2.0 * length) * math.sin(th)
                             + 3.0 / (mass * length * length) * u) * dt
            thdot = min(max(thdot, -max_speed), max_speed)
            th = th + thdot * dt
        ret[k, r] = total
    return ret


@njit(cache=True, parallel=True)
def rollout_mountaincar(params, sizes, init, max_steps, power):
    K, R, _ = init.shape
    ret = np.zeros((K, R))
    width = sizes.max()
    for e in prange(K * R):
        k = e // R
        r = e % R
        buf_a = np.empty(width)
        buf_b = np.empty(width)
        obs = np.empty(2)
        pos = init[k, r, 0]
        vel = init[k, r, 1]
        total = 0.0
        for _ in range(max_steps):
            obs[0] = pos
            obs[1] = vel
            u = _mlp_action(params[k], sizes, obs, buf_a, buf_b)
            vel = vel + u * power - 0.0025 * math.cos(3.0 * pos)
            vel = min(max(vel, -0.07), 0.07)
            pos = min(max(pos + vel, -1.2), 0.6)
            if pos <= -1.2 and vel < 0.0:
                vel = 0.0
            done = pos >= 0.45 and vel >= 0.0
            total += -0.1 * u * u
            if done:
                total += 100.0
                break
        ret[k, r] = total
    return ret
