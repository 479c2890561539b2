"""Time the numba and pure-numpy kernels side by side.

Usage: python3 benchmarks/bench_backends.py [--repeat N]

Each kernel is called once to warm up (numba compiles on first use) and
then timed; the table reports the best of ``--repeat`` runs in milliseconds.
"""
import argparse
import time

import numpy as np

from steinevo._accel import _numpy
from steinevo.rl import EnvSpec

try:
    from steinevo._accel import _numba
except ImportError:  # numba missing: only the numpy column is filled
    _numba = None


def _cases(rng):
    X = rng.standard_normal((400, 2))
    Y = rng.standard_normal((256, 2))
    pend = EnvSpec.pendulum()
    car = EnvSpec.mountaincar()
    P_pend = 0.3 * rng.standard_normal((64, pend.policy().n_params))
    P_car = 0.3 * rng.standard_normal((64, car.policy().n_params))
    init_pend = pend.initial_states(rng, (64, 4))
    init_car = car.initial_states(rng, (64, 4))
    obs = rng.standard_normal((64, 32, 3))
    return {
        "rbf_gram 400x400": lambda b: b.rbf_gram(X, X, 0.5),
        "rbf_repulsion 400": lambda b: b.rbf_repulsion(X, 0.5),
        "mmd2_vstat 400x256": lambda b: b.mmd2_vstat(X, Y, 0.5),
        "mlp_batch 64x32": lambda b: b.mlp_batch(P_pend, pend.policy().sizes_array(), obs),
        "pendulum 64x4 rollouts": lambda b: b.rollout_pendulum(
            P_pend, pend.policy().sizes_array(), init_pend, pend.max_steps, pend.dt, pend.g, pend.mass,
            pend.length, pend.max_torque, pend.max_speed),
        "mountaincar 64x4 rollouts": lambda b: b.rollout_mountaincar(
            P_car, car.policy().sizes_array(), init_car, car.max_steps, car.power),
    }


def _best_ms(fn, backend, repeat):
    fn(backend)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(backend)
        best = min(best, time.perf_counter() - t0)
    return 1e3 * best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, fn in _cases(rng).items():
        t_np = _best_ms(fn, _numpy, args.repeat)
        if _numba is None:
            print(f"{name:<28}{t_np:>12.2f}{'-':>12}{'-':>10}")
            continue
        t_nb = _best_ms(fn, _numba, args.repeat)
        print(f"{name:<28}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
