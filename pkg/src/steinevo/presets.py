"""Named hyperparameter presets and the tuning grids used for them.

Preset keys are ``"<task>/<method>"``. ``lr`` is the Adam learning rate,
``h`` the kernel bandwidth, ``prior_scale`` the GF-SVGD prior covariance
scale, ``elite`` the number of CMA-ES elites, ``sigma_init`` the initial
CMA-ES step size and ``zeta`` the OpenAI-ES perturbation scale.
"""
import numpy as np

from .errors import ConfigError

# task: (svgd lr, h), (gfsvgd lr, h, prior), (svcmaes elite, h, sigma), (svopenes lr, h, zeta)
_TABLE = {
    "gmm": ((0.05, 0.223), (1.0, 0.889, 2.72), (2, 0.889, 0.50), (0.50, 0.001, 0.10)),
    "banana": ((1.0, 1e-4), (0.001, 0.011, 1.116), (2, 0.011, 0.5), (0.001, 1e-4, 0.15)),
    "motion": ((0.01, 0.01), (0.001, 0.67, 2.67), (2, 0.01, 0.10), (0.05, 0.01, 0.10)),
    "covtype": ((0.005, 0.334), (0.05, 1.0, 4.45), (9, 0.667, 0.45), (0.01, 0.334, 0.5)),
    "glass": ((0.01, 1.0), (0.1, 1.0, 4.45), (6, 1.0, 0.40), (0.01, 1.0, 0.05)),
    "pendulum": (None, (0.05, 16.67, 0.34), (2, 3.334, 0.47), (0.10, 30.0, 0.05)),
    "cartpole": (None, (0.10, 13.33, 0.45), (3, 30.0, 0.894), (1.0, 30.0, 1.0)),
    "mountaincar": (None, (0.05, 23.33, 0.56), (2, 30.0, 0.68), (1.0, 30.0, 0.68)),
    "halfcheetah": (None, (0.05, 6.667, 0.01), (5, 16.67, 0.68), (0.05, 30.0, 0.05)),
    "hopper": (None, (0.10, 16.67, 0.01), (5, 3.334, 0.05), (0.10, 30.0, 0.26)),
    "walker": (None, (0.10, 10.0, 0.01), (8, 10.0, 0.79), (0.05, 30.0, 0.16)),
}

SUPPORTED_TASKS = ("gmm", "banana", "motion", "logreg", "pendulum", "mountaincar", "sphere", "rosenbrock")


def _build():
    out = {}
    for task, (sv, gf, cma, oes) in _TABLE.items():
        if sv is not None:
            out[f"{task}/svgd"] = {"lr": sv[0], "h": sv[1]}
        out[f"{task}/gfsvgd"] = {"lr": gf[0], "h": gf[1], "prior_scale": gf[2]}
        out[f"{task}/svcmaes"] = {"elite": cma[0], "h": cma[1], "sigma_init": cma[2]}
        out[f"{task}/svopenes"] = {"lr": oes[0], "h": oes[1], "zeta": oes[2]}
    return out


PRESETS = _build()

# aliases: annealed SVGD shares the SVGD row; the CMA baselines share the SV-CMA-ES row
_ALIAS = {"asvgd": "svgd", "cmaes": "svcmaes", "parallel_cmaes": "svcmaes"}

# per-task sampling-run sizes and schedules
TASK_DEFAULTS = {
    "gmm": {"n_particles": 100, "subpop_size": 4, "iterations": 1000, "schedule": "log_clamped"},
    "banana": {"n_particles": 100, "subpop_size": 4, "iterations": 1000, "schedule": "log_clamped"},
    "motion": {"n_particles": 100, "subpop_size": 4, "iterations": 1000, "schedule": "log_clamped"},
    "logreg": {"n_particles": 8, "subpop_size": 32, "iterations": 500, "schedule": "log_clamped"},
    "pendulum": {"n_particles": 4, "subpop_size": 16, "iterations": 200, "schedule": "log_fade"},
    "mountaincar": {"n_particles": 4, "subpop_size": 16, "iterations": 200, "schedule": "log_fade"},
}


def preset(name):
    """Look up ``"task/method"``; aliases resolve to the row they share."""
    if name in PRESETS:
        return dict(PRESETS[name])
    task, _, method = name.partition("/")
    alias = _ALIAS.get(method)
    if alias and f"{task}/{alias}" in PRESETS:
        vals = dict(PRESETS[f"{task}/{alias}"])
        if method in ("cmaes", "parallel_cmaes"):
            vals.pop("h", None)
        return vals
    raise ConfigError(f"unknown preset {name!r}")


def preset_names():
    return sorted(PRESETS)


def _lin(a, b):
    return [float(v) for v in np.linspace(a, b, 10)]


ADAM_LRS = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0]

GRIDS = {
    "gmm": {"h": _lin(0.001, 1.0), "prior_scale": _lin(0.1, 6.0)},
    "banana": {"h": _lin(0.0001, 0.1), "prior_scale": _lin(0.01, 2.0)},
    "motion": {"h": _lin(0.001, 3.0), "prior_scale": _lin(0.01, 4.0)},
}
ELITE_RATIOS = _lin(0.15, 0.5)
SIGMA_INITS = _lin(0.05, 0.5)


def tuning_grid(task, method):
    """Full search grid for a sampling task, keyed by RunConfig parameter names."""
    if task not in GRIDS:
        raise ConfigError(f"no tuning grid for task {task!r}")
    base = GRIDS[task]
    grid = {"h": base["h"]}
    if method in ("svgd", "asvgd", "gfsvgd", "svopenes"):
        grid["lr"] = ADAM_LRS
    if method == "gfsvgd":
        grid["prior_scale"] = base["prior_scale"]
    if method == "svopenes":
        grid["zeta"] = SIGMA_INITS
    if method == "svcmaes":
        grid["elite_ratio"] = ELITE_RATIOS
        grid["sigma_init"] = SIGMA_INITS
    return grid
