"""Fast built-in invariant checks behind ``steinevo check``.

Each check returns ``(name, ok, detail)``; none of them needs a test runner.
"""
import numpy as np

from . import evaluation, kernels
from .es import CmaParams, CmaState, cma_step, cma_weights
from .rl import EXPECTED_PARAMS, EnvSpec
from .sves import SvesEnsemble, svcma_step
from .targets import (DoubleBananaTarget, GaussianMixtureTarget, LogRegTarget, MotionPlanningTarget,
                      RosenbrockTarget, SphereTarget)


def _mmd_self():
    X = np.random.default_rng(0).standard_normal((50, 3))
    v = evaluation.mmd2_biased(X, X, 1.0).mmd2
    return abs(v) <= 1e-12, f"mmd2(X, X) = {v:.3e}"


def _repulsion_sum():
    X = np.random.default_rng(1).standard_normal((40, 4))
    s = float(np.abs(kernels.repulsion(X, 0.7).sum(axis=0)).max())
    return s <= 1e-10, f"max |sum_i repulsion_i| = {s:.3e}"


def _gradients():
    rng = np.random.default_rng(2)
    Xd = rng.standard_normal((30, 3))
    yd = (Xd[:, 0] > 0).astype(float)
    targets = [GaussianMixtureTarget.random(0), DoubleBananaTarget(), MotionPlanningTarget(),
               LogRegTarget(Xd, yd, batch_size=1000), SphereTarget(4), RosenbrockTarget(4)]
    worst = 0.0
    for t in targets:
        for _ in range(5):
            x = 0.5 * rng.standard_normal(t.dim)
            g = t.grad(x)
            fd = evaluation.finite_diff_grad(t, x, 1e-6)
            worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0)))
    return worst <= 1e-5, f"worst relative gradient error {worst:.2e}"


def _single_particle_reduction():
    t = SphereTarget(5)
    x0 = np.full((1, 5), 2.0)
    w = cma_weights(8, 4, 5)
    p = CmaParams.default(w, 5)
    st = CmaState.initial(x0, 0.5)
    ens = SvesEnsemble.create(x0, 0.5, 8, 4, 1.0)
    ra, rb = np.random.default_rng(3), np.random.default_rng(3)
    for _ in range(30):
        st, _ = cma_step(st, t, 8, w, p, [ra])
        ens, _ = svcma_step(ens, t, [rb], 0.0)
    same = np.array_equal(st.mean, ens.state.mean) and np.array_equal(st.cov, ens.state.cov)
    return same, "n=1, gamma=0 SV-CMA-ES matches CMA-ES bit for bit" if same else "trajectories differ"


def _policy_sizes():
    got = {s: EnvSpec.by_name(s).policy().n_params for s in EXPECTED_PARAMS}
    return got == EXPECTED_PARAMS, f"policy parameter counts {got}"


CHECKS = {
    "mmd_self_zero": _mmd_self,
    "repulsion_cancels": _repulsion_sum,
    "closed_form_gradients": _gradients,
    "single_particle_reduction": _single_particle_reduction,
    "policy_parameter_counts": _policy_sizes,
}


def run_all():
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report, don't abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
