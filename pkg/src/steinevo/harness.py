"""Experiment orchestration: run configs, seeding, budget checks, metrics and CSV output."""
import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import evaluation, kernels, presets
from .errors import ConfigError, DegenerateWeights, RunFailed, SteinEvoError
from .es import CmaParams, CmaState, cma_step, cma_weights
from .rl import RLTarget
from .sves import OpenEsConfig, SvesEnsemble, svcma_step, svopenes_step
from .svgd import AnnealSchedule, GfSvgdConfig, gfsvgd_step, make_optimizer, svgd_direction, svgd_step
from .targets import (DoubleBananaTarget, GaussianMixtureTarget, MotionPlanningTarget, RosenbrockTarget,
                      SphereTarget, bundled_dataset_path, load_dataset)

METHODS = ("svgd", "asvgd", "gfsvgd", "svopenes", "svcmaes", "cmaes", "parallel_cmaes")
ES_METHODS = ("svopenes", "svcmaes", "cmaes", "parallel_cmaes")
SAMPLING_TASKS = ("gmm", "banana", "motion")
RL_TASKS = ("pendulum", "mountaincar")
OPT_TASKS = ("sphere", "rosenbrock")
TASKS = SAMPLING_TASKS + ("logreg",) + RL_TASKS + OPT_TASKS
CSV_HEADER = ("method", "task", "seed", "iteration", "metric", "value")

# initial particles: uniform over a task box where the target defines one,
# otherwise N(init_mean, init_std^2 I)
_INIT_BOX = {"gmm": (-6.0, 6.0), "motion": (-1.0, 1.0)}
_INIT_STD = {"gmm": 1.0, "banana": 1.0, "motion": 0.5, "logreg": 1.0,
             "pendulum": 0.1, "mountaincar": 0.1, "sphere": 1.0, "rosenbrock": 1.0}
_MAXIMIZE = {"best_return", "test_accuracy"}


@dataclass
class RunConfig:
    """One (task, method, seed) run. ``None`` fields take task or method defaults."""

    task: str = "gmm"
    method: str = "svcmaes"
    n_particles: int = 100
    subpop_size: int = 4
    iterations: int = 1000
    seed: int = 0
    h: float = None
    lr: float = 0.1
    alpha_x: float = 1.0
    elite: int = None
    elite_ratio: float = None
    sigma_init: float = 0.5
    prior_scale: float = 1.0
    zeta: float = 0.1
    schedule: str = None
    gamma_value: float = 1.0
    optimizer: str = "adam"
    shaping: str = "rank"
    alg1_literal: bool = False
    full_driving_sum: bool = False
    gf_anneal_drive: bool = False
    init_mean: float = 0.0
    init_std: float = None
    dim: int = None
    target_seed: int = 0
    gt_seed: int = 0
    gt_samples: int = 256
    gt_burn_in: int = 10_000
    gt_dir: str = None
    dataset: str = None
    split_seed: int = 0
    batch_size: int = 128
    n_rollouts: int = 16
    metric_every: int = 10
    out: str = None
    dump: str = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        for name in ("n_particles", "subpop_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.metric_every < 1:
            raise ConfigError("metric_every must be >= 1")
        if self.method == "svopenes" and self.subpop_size % 2:
            raise ConfigError("svopenes needs an even subpop_size (antithetic pairs)")
        if self.method in ("svcmaes", "cmaes", "parallel_cmaes") and self.subpop_size < 2:
            raise ConfigError("CMA-ES methods need subpop_size >= 2")
        for name in ("lr", "sigma_init", "prior_scale", "zeta"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.h is not None and not float(self.h) > 0:
            raise ConfigError("h must be positive")
        if self.schedule is not None and self.schedule not in ("constant", "log_clamped", "log_fade"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.method in ("svgd", "asvgd") and self.task in RL_TASKS:
            raise ConfigError("gradient-based SVGD has no closed-form gradient on RL tasks")
        if self.elite is not None and not 1 <= self.elite <= self.subpop_size:
            raise ConfigError("elite must lie in [1, subpop_size]")
        if self.elite_ratio is not None and not 0 < self.elite_ratio <= 1:
            raise ConfigError("elite_ratio must lie in (0, 1]")
        if self.dataset is not None and not os.path.exists(self.dataset):
            raise ConfigError(f"dataset file not found: {self.dataset}")

    # --- resolved values --------------------------------------------------
    def resolved_elite(self):
        if self.elite_ratio is not None:
            return max(1, int(round(self.elite_ratio * self.subpop_size)))
        if self.elite is not None:
            return int(self.elite)
        return max(1, self.subpop_size // 2)

    def resolved_schedule(self):
        kind = self.schedule
        if kind is None:
            if self.method in ("svgd", "gfsvgd"):
                kind = "constant"
            elif self.method in ("cmaes", "parallel_cmaes"):
                kind = "constant"
            else:
                kind = presets.TASK_DEFAULTS.get(self.task, {}).get("schedule", "log_clamped")
        return AnnealSchedule(kind, max(self.iterations, 1), self.gamma_value)

    def resolved_init_std(self):
        return _INIT_STD[self.task] if self.init_std is None else float(self.init_std)

    def to_dict(self):
        return asdict(self)


def config_from_dict(data):
    """Build a RunConfig from a mapping, expanding an optional ``preset`` key first."""
    data = dict(data)
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    name = data.pop("preset", None)
    if name:
        merged.update(preset_overrides(name))
    merged.update(data)
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**merged)


def preset_overrides(name):
    """Task, method, sizes and hyperparameters implied by a preset name."""
    task, _, method = name.partition("/")
    vals = presets.preset(name)
    out = {"method": method}
    task_key = "logreg" if task in ("covtype", "glass") else task
    if task_key in TASKS:
        out["task"] = task_key
        out.update({k: v for k, v in presets.TASK_DEFAULTS.get(task_key, {}).items() if k != "schedule"})
    out.update(vals)
    if method in ("svgd", "asvgd", "gfsvgd") and "subpop_size" in out and task_key in SAMPLING_TASKS + ("logreg",):
        # single-population methods spend the whole budget on particles
        out["n_particles"] = out["n_particles"] * out["subpop_size"]
        out["subpop_size"] = 1
    return out


@dataclass(frozen=True)
class RunRecord:
    method: str
    task: str
    seed: int
    iteration: int
    metric: str
    value: float


# --- budget --------------------------------------------------------------

def budget_per_generation(cfg):
    """Energy (or gradient) evaluations one generation spends."""
    if cfg.method in ES_METHODS:
        return cfg.n_particles * cfg.subpop_size
    return cfg.n_particles


def comparable(a, b):
    return a.task == b.task and budget_per_generation(a) == budget_per_generation(b)


def check_budget_parity(configs):
    """Raise ConfigError unless every config spends the same evaluations per generation."""
    budgets = {budget_per_generation(c) for c in configs}
    if len(budgets) > 1:
        raise ConfigError(f"unequal evaluation budgets per generation: {sorted(budgets)}")
    return budgets.pop() if budgets else 0


# --- targets and ground truth -------------------------------------------

def build_target(cfg):
    if cfg.task == "gmm":
        return GaussianMixtureTarget.random(cfg.target_seed)
    if cfg.task == "banana":
        return DoubleBananaTarget()
    if cfg.task == "motion":
        return MotionPlanningTarget()
    if cfg.task == "logreg":
        path = cfg.dataset or bundled_dataset_path()
        return load_dataset(path, cfg.split_seed, batch_size=cfg.batch_size)
    if cfg.task in RL_TASKS:
        return RLTarget(cfg.task, n_rollouts=cfg.n_rollouts, seed=cfg.seed)
    if cfg.task == "sphere":
        return SphereTarget(cfg.dim or 10)
    return RosenbrockTarget(cfg.dim or 5)


def _cache_dir(cfg):
    if cfg.gt_dir:
        return Path(cfg.gt_dir)
    root = os.environ.get("STEINEVO_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "steinevo")
    return Path(root)


def ground_truth(cfg, target=None):
    """256 (by default) reference samples for a sampling task, cached as JSONL."""
    if cfg.task not in SAMPLING_TASKS:
        raise ConfigError(f"task {cfg.task!r} has no sampling ground truth")
    target = target or build_target(cfg)
    if cfg.task == "gmm":
        # exact draws, cheap enough to regenerate
        return target.sample(cfg.gt_samples, np.random.default_rng([cfg.gt_seed, cfg.target_seed]))
    key = f"{cfg.task}-seed{cfg.gt_seed}-n{cfg.gt_samples}-burn{cfg.gt_burn_in}.jsonl"
    path = _cache_dir(cfg) / key
    if path.exists():
        x = evaluation.read_ground_truth(path, task=cfg.task, seed=cfg.gt_seed)
        if x.shape == (cfg.gt_samples, target.dim):
            return x
    rng = np.random.default_rng([cfg.gt_seed, 7])
    x0 = rng.uniform(-1.0, 1.0, size=(cfg.gt_samples, target.dim))
    res = evaluation.mh_sample(target, cfg.gt_samples, cfg.gt_burn_in, 0.1, rng, x0=x0, tune=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    evaluation.write_ground_truth(tmp, cfg.task, cfg.gt_seed, res.samples)
    os.replace(tmp, path)
    return res.samples


def displaced_prior_samples(dim, k, rng, shift=5.0):
    """Unit Gaussian samples displaced by ``shift`` in every coordinate (sanity baseline)."""
    return rng.standard_normal((k, dim)) + shift


# --- metrics -------------------------------------------------------------

class _Metrics:
    def __init__(self, cfg, target):
        self.cfg = cfg
        self.target = target
        self.gt = None
        if cfg.task in SAMPLING_TASKS:
            self.gt = ground_truth(cfg, target)
            self.h_mmd = kernels.median_bandwidth(self.gt)
            if cfg.task == "gmm":
                self.mean, self.var = target.mean(), target.variance()
            else:
                self.mean, self.var = self.gt.mean(axis=0), self.gt.var(axis=0, ddof=1)
        elif cfg.task in RL_TASKS:
            self.eval_target = RLTarget(cfg.task, n_rollouts=cfg.n_rollouts, seed=10 ** 6 + cfg.seed)
            self.best = -np.inf
        elif cfg.task in OPT_TASKS:
            self.best = np.inf

    def __call__(self, X, best_f=None):
        cfg = self.cfg
        out = []
        if cfg.task in SAMPLING_TASKS:
            out.append(("mmd2", evaluation.mmd2_biased(X, self.gt, self.h_mmd).mmd2))
            if X.shape[0] > 1:
                mm, mv = evaluation.moment_mse(X, self.mean, self.var)
                out += [("mse_mean", mm), ("mse_var", mv)]
        elif cfg.task == "logreg":
            out.append(("test_accuracy", self.target.accuracy(X, "test")))
        elif cfg.task in RL_TASKS:
            self.best = max(self.best, float(np.max(self.eval_target.returns(X))))
            out.append(("best_return", self.best))
        else:
            # direct evaluation, kept off the sampler's evaluation counter
            cur = float(np.min(self.target._energy(np.atleast_2d(X))))
            if best_f is not None:
                cur = min(cur, best_f)
            self.best = min(self.best, cur)
            out.append(("best_f", self.best))
        return out


# --- samplers ------------------------------------------------------------

class _Runner:
    """Method-specific state plus a ``step(t)`` and a ``particles`` view."""

    def __init__(self, cfg, target):
        self.cfg = cfg
        self.target = target
        self.schedule = cfg.resolved_schedule()
        n, d = cfg.n_particles, target.dim
        ss = np.random.SeedSequence(cfg.seed)
        kids = ss.spawn(n + 2)
        self.rngs = [np.random.default_rng(k) for k in kids[:n]]
        self.aux_rng = np.random.default_rng(kids[n])
        init_rng = np.random.default_rng(kids[n + 1])
        if cfg.init_std is None and cfg.task in _INIT_BOX:
            lo, hi = _INIT_BOX[cfg.task]
            X0 = init_rng.uniform(lo, hi, size=(n, d))
        else:
            X0 = cfg.init_mean + cfg.resolved_init_std() * init_rng.standard_normal((n, d))
        self.best_f = None
        m = cfg.method
        if m in ("svgd", "asvgd", "gfsvgd", "svopenes"):
            self.X = X0
            self.opt = make_optimizer(cfg.optimizer, cfg.lr)
            if m == "gfsvgd":
                self.gf = GfSvgdConfig(cfg.prior_scale, cfg.lr, cfg.optimizer, cfg.gf_anneal_drive)
            if m == "svopenes":
                self.oes = OpenEsConfig(cfg.zeta, cfg.lr, cfg.subpop_size, cfg.shaping)
        elif m == "svcmaes":
            self.ens = SvesEnsemble.create(X0, cfg.sigma_init, cfg.subpop_size, cfg.resolved_elite(),
                                           self._h(X0), alpha_x=cfg.alpha_x, alg1_literal=cfg.alg1_literal,
                                           full_driving_sum=cfg.full_driving_sum)
        elif m == "parallel_cmaes":
            self.state = CmaState.initial(X0, cfg.sigma_init)
            self.w = cma_weights(cfg.subpop_size, cfg.resolved_elite(), d)
            self.p = CmaParams.default(self.w, d, alpha_x=cfg.alpha_x)
        else:  # one search distribution spending the whole budget
            pop = n * cfg.subpop_size
            elite = max(1, int(round(cfg.resolved_elite() / cfg.subpop_size * pop)))
            elite = min(elite, pop)
            self.state = CmaState.initial(X0[:1], cfg.sigma_init)
            self.w = cma_weights(pop, elite, d)
            self.p = CmaParams.default(self.w, d, alpha_x=cfg.alpha_x)
            self.pop = pop

    def _h(self, X):
        if self.cfg.h is not None:
            return float(self.cfg.h)
        if X.shape[0] < 2:
            return 1.0  # a lone particle feels no repulsion, any bandwidth will do
        return kernels.median_bandwidth(X)

    @property
    def particles(self):
        m = self.cfg.method
        if m == "svcmaes":
            return self.ens.particles
        if m in ("cmaes", "parallel_cmaes"):
            return self.state.mean
        return self.X

    def step(self, t):
        cfg = self.cfg
        m = cfg.method
        g = self.schedule(t)
        if cfg.task == "logreg":
            self.target.resample_batch(self.aux_rng)
        if m in ("svgd", "asvgd"):
            if m == "svgd":
                g = cfg.gamma_value
            self.X = svgd_step(self.X, svgd_direction(self.X, self.target, self._h(self.X), g), self.opt)
        elif m == "gfsvgd":
            self.X = gfsvgd_step(self.X, self.target, self.gf, self._h(self.X), g, self.opt)
        elif m == "svopenes":
            self.X = svopenes_step(self.X, self.oes, self.target, self._h(self.X), g, self.rngs, self.opt)
        elif m == "svcmaes":
            if cfg.h is None:
                self.ens = replace(self.ens, h=self._h(self.ens.particles))
            self.ens, sub = svcma_step(self.ens, self.target, self.rngs, g)
            self._track(sub)
        elif m == "parallel_cmaes":
            self.state, sub = cma_step(self.state, self.target, cfg.subpop_size, self.w, self.p, self.rngs)
            self._track(sub)
        else:
            self.state, sub = cma_step(self.state, self.target, self.pop, self.w, self.p, self.rngs[:1])
            self._track(sub)

    def _track(self, sub):
        f = float(np.min(sub.fitness))
        self.best_f = f if self.best_f is None else min(self.best_f, f)

    def finite(self):
        if self.cfg.method in ("svcmaes",):
            return self.ens.state.is_finite()
        if self.cfg.method in ("cmaes", "parallel_cmaes"):
            return self.state.is_finite()
        return bool(np.all(np.isfinite(self.X)))


def run_experiment(cfg):
    """Yield RunRecords for ``cfg``: iteration-0 metrics, every ``metric_every`` iterations and the last one.

    Raises RunFailed (carrying the records emitted so far) when the sampler
    state stops being finite or a numeric routine breaks down.
    """
    cfg.validate()
    target = build_target(cfg)
    metrics = _Metrics(cfg, target)
    runner = _Runner(cfg, target)
    budget = budget_per_generation(cfg)
    records = []
    dump = open(cfg.dump, "w", encoding="utf-8") if cfg.dump else None

    def emit(t):
        X = runner.particles
        for name, value in metrics(X, runner.best_f if cfg.task in OPT_TASKS else None):
            rec = RunRecord(cfg.method, cfg.task, cfg.seed, t, name, float(value))
            records.append(rec)
            yield rec
        if dump is not None:
            dump.write(json.dumps({"iteration": t, "particles": X.tolist()}) + "\n")

    try:
        yield from emit(0)
        for t in range(1, cfg.iterations + 1):
            before = target.eval_counter
            try:
                runner.step(t)
            except (DegenerateWeights, FloatingPointError, np.linalg.LinAlgError, SteinEvoError) as exc:
                raise RunFailed(f"iteration {t}: {exc}", list(records)) from exc
            spent = target.eval_counter - before
            if spent != budget:
                raise RunFailed(f"iteration {t}: spent {spent} evaluations, budget is {budget}", list(records))
            if not runner.finite():
                raise RunFailed(f"iteration {t}: non-finite sampler state", list(records))
            if t % cfg.metric_every == 0 or t == cfg.iterations:
                yield from emit(t)
    finally:
        if dump is not None:
            dump.close()


def run_to_list(cfg):
    return list(run_experiment(cfg))


def final_metric(records, metric):
    vals = [r for r in records if r.metric == metric]
    if not vals:
        raise ValueError(f"no records for metric {metric!r}")
    return max(vals, key=lambda r: r.iteration).value


def final_particles(cfg):
    """Run ``cfg`` to completion and return the final particle array (no metrics)."""
    target = build_target(cfg)
    runner = _Runner(cfg, target)
    for t in range(1, cfg.iterations + 1):
        runner.step(t)
    return runner.particles


# --- CSV -----------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def write_csv(records, fh):
    """Write records to an open text stream, sorted by (seed, iteration, metric)."""
    rows = sorted(records, key=lambda r: (r.seed, r.iteration, r.metric))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow((r.method, r.task, r.seed, r.iteration, r.metric, _fmt(r.value)))


def emit_csv(records, path):
    """Write the metrics CSV with 17 significant digits per value."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_csv(records, fh)
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV {path}: {exc}") from exc
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [RunRecord(m, t, int(s), int(i), k, float(v)) for m, t, s, i, k, v in reader]


# --- grid search -----------------------------------------------------------

def _cell_value(args):
    cfg, metric = args
    return final_metric(run_to_list(cfg), metric)


def grid_search(base, grid, metric, seeds=None, maximize=None, workers=1):
    """Evaluate the Cartesian grid, averaging ``metric`` over seeds, and pick the best cell.

    Cells are enumerated in lexicographic order of their parameter values
    (parameters sorted by name); on ties the earliest cell wins. Returns
    ``(best_config, report)`` where ``report`` has one row per (cell, seed).
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must be non-empty")
    seeds = [base.seed] if seeds is None else list(seeds)
    if maximize is None:
        maximize = metric in _MAXIMIZE
    names = sorted(grid)
    cells = sorted(itertools.product(*[list(grid[k]) for k in names]))
    jobs = []
    for values in cells:
        for s in seeds:
            cfg = replace(base, seed=s, out=None, dump=None, **dict(zip(names, values)))
            jobs.append((cfg, metric))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_cell_value, jobs))
    else:
        vals = [_cell_value(j) for j in jobs]
    report = []
    best, best_score = None, None
    for ci, values in enumerate(cells):
        chunk = vals[ci * len(seeds):(ci + 1) * len(seeds)]
        for s, v in zip(seeds, chunk):
            report.append({**dict(zip(names, values)), "seed": s, metric: v})
        score = float(np.mean(chunk))
        better = best_score is None or (score > best_score if maximize else score < best_score)
        if better:
            best, best_score = values, score
    return replace(base, **dict(zip(names, best))), report
