"""Stein variational evolution strategies.

SV-CMA-ES keeps one CMA-ES search distribution per particle. The CMA
recombination step of particle i replaces the SVGD score term and a kernel
repulsion over all particle means is added before the step-size and
covariance updates consume it. SV-OpenAI-ES plugs antithetic Monte-Carlo
gradients into the ordinary SVGD direction.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .es import CmaParams, CmaState, EsWeights, advance, cma_weights, openes_grads, recombine, sample_subpop
from .svgd import stein_direction


@dataclass
class SvesEnsemble:
    state: CmaState
    weights: EsWeights
    params: CmaParams
    h: float
    m: int
    alg1_literal: bool = False
    full_driving_sum: bool = False

    @classmethod
    def create(cls, particles, sigma, m, elite, h, alpha_x=1.0, **flags):
        state = CmaState.initial(np.atleast_2d(particles), sigma)
        w = cma_weights(m, elite, state.dim)
        p = CmaParams.default(w, state.dim, alpha_x=alpha_x)
        return cls(state=state, weights=w, params=p, h=float(h), m=int(m), **flags)

    @property
    def particles(self):
        return self.state.mean

    @property
    def n(self):
        return self.state.n

    @property
    def generation(self):
        return self.state.generation


def svcma_directions(ens, sub, gamma_t):
    """Step ``yhat_i`` for every particle, in sigma-normalised coordinates.

    yhat_i = sum_k w_k y_ik + gamma / (n sigma_i) * sum_j grad_{x_j} k(x_j, x_i).
    With ``alg1_literal`` the raw displacements ``xi - x`` are used instead
    and the repulsion is not divided by sigma_i.
    """
    st = ens.state
    n = st.n
    drive = recombine(sub, ens.weights)
    sig = st.sigma[:, None]
    if ens.full_driving_sum:
        K = kernels.gram(st.mean, st.mean, ens.h)
        # K symmetric: sum_j sigma_j drive_j k_ji
        drive = (K @ (sig * drive)) / n
        if not ens.alg1_literal:
            drive = drive / sig
    elif ens.alg1_literal:
        drive = sig * drive
    rep = kernels.repulsion(st.mean, ens.h)
    if ens.alg1_literal:
        return drive + (gamma_t / n) * rep
    return drive + (gamma_t / n) * rep / sig


def svcma_direction(ens, i, sub, gamma_t):
    return svcma_directions(ens, sub, gamma_t)[i]


def svcma_step(ens, target, rng, gamma_t):
    """One synchronous SV-CMA-ES generation.

    All subpopulations are sampled and evaluated first; the repulsion then
    reads the frozen particle means. Returns ``(new_ensemble, subpopulation)``.
    """
    sub = sample_subpop(ens.state, ens.m, rng, target)
    yhat = svcma_directions(ens, sub, gamma_t)
    new_state = advance(ens.state, sub, yhat, ens.weights, ens.params)
    return replace(ens, state=new_state), sub


@dataclass
class OpenEsConfig:
    zeta: float
    lr: float
    m: int
    shaping: str = "rank"

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if self.m < 2 or self.m % 2:
            raise ValueError("subpopulation size must be even")


def svopenes_direction(particles, cfg, target, h, gamma_t, rng):
    X = np.atleast_2d(np.asarray(particles, dtype=float))
    g = openes_grads(X, cfg.zeta, cfg.m, target, rng, shaping=cfg.shaping)
    return stein_direction(X, -g, h, gamma_t)


def svopenes_step(particles, cfg, target, h, gamma_t, rng, opt):
    return opt.step(np.atleast_2d(np.asarray(particles, dtype=float)),
                    svopenes_direction(particles, cfg, target, h, gamma_t, rng))
