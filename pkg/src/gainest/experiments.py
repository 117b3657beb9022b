"""Monte-Carlo experiment harness with CSV and SVG output.

Five experiment kinds mirror the study's shapes:

* ``sweep_t0``  -- mean squared estimation error versus the true gain;
* ``sweep_alpha`` -- mean squared error versus the compensation value;
* ``interval_coverage`` -- miss frequency of the probabilistic intervals
  (the ``mse`` column carries the observed frequency, ``bound`` the target);
* ``nondiff_scaling`` -- average count of objective kinks in an
  estimator-centred interval versus the block length (the ``mse`` column
  carries the mean count);
* ``theory_table`` -- closed-form floors only (``mse`` column zero).

Per-trial seeds are ``master_seed xor trial_index``, independent of the grid
value, so rows share trial randomness (common random numbers) and reruns are
bit-identical regardless of the thread count.  ``GAIN_EST_THREADS`` caps the
worker threads (the heavy per-trial work is numpy, which releases the GIL).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .initial import var_estimate, var_estimator_crb
from .intervals import partially_prob_bounds, prob_upper
from .model import ModelParams, alpha_no_bias, derive_params, make_lattice, make_trial, trial_seed
from .optimize import EstimatorConfig, estimate, estimate_pwda
from .sampling import count_nondifferentiable
from .target import make_context
from .theory import bias_asymptotic, fisher_asymptotic, mse_lower_bound

CSV_HEADER = "grid,mse,stderr,bound,crb,bias2,mean_candidates,mean_runtime_ms"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str                       # sweep_t0 | sweep_alpha | interval_coverage
    #                                       | nondiff_scaling | theory_table
    dwr_db: float = 40.0
    wnr_db: float = 3.0
    n: int = 100
    lattice_kind: str = "scalar"
    alpha_rule: str = "costa"             # costa | opt | fixed
    alpha_fixed: float | None = None
    grid: tuple = (0.6, 0.8, 1.0, 1.2)    # t0 values, alpha values, or n values
    t0_fixed: float = 0.8                 # true gain for alpha sweeps / coverage
    trials: int = 200
    master_seed: int = 42
    estimator: str = "ml"                 # ml | pwda | var | t1
    estimator_config: EstimatorConfig = field(default_factory=EstimatorConfig)
    threads: int | None = None
    cache_path: str | None = None
    # wall-clock timing is inherently irreproducible, so rows carry zeros in
    # the runtime column unless it is explicitly requested
    include_timing: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.grid) == 0:
            raise ValueError("grid must be nonempty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")


@dataclass(frozen=True)
class ResultRow:
    grid_value: float
    empirical_mse: float
    mc_stderr: float
    mse_bound: float
    crb_component: float
    bias_component: float
    mean_candidates: float
    mean_runtime_ms: float


def _threads(cfg: ExperimentConfig) -> int:
    env = os.environ.get("GAIN_EST_THREADS")
    if env is not None:
        return max(1, int(env))
    if cfg.threads is not None:
        return max(1, cfg.threads)
    return 1


def _alpha_for(cfg: ExperimentConfig, t0: float) -> float:
    if cfg.alpha_rule == "costa":
        return alpha_no_bias(cfg.wnr_db, t0)
    if cfg.alpha_rule == "opt":
        from .theory import alpha_opt
        probe = derive_params(cfg.dwr_db, cfg.wnr_db, 0.5, t0, cfg.n)
        return min(alpha_opt(probe), 1.0)
    if cfg.alpha_rule == "fixed":
        if cfg.alpha_fixed is None:
            raise ValueError("alpha_rule='fixed' needs alpha_fixed")
        return cfg.alpha_fixed
    raise ValueError(f"unknown alpha rule {cfg.alpha_rule!r}")


def _regime_for(kind: str) -> str:
    return "goodlattice" if kind == "convcoset" else "scalar"


def _one_error(params: ModelParams, lattice, cfg: ExperimentConfig, seed: int
               ) -> tuple[float, float, float]:
    """(squared error, candidates evaluated, runtime ms) for one trial."""
    trial = make_trial(params, lattice, seed)
    ctx = make_context(trial, params, lattice)
    start = time.perf_counter()
    if cfg.estimator == "ml":
        rep = estimate(ctx, cfg.estimator_config)
        t_hat, cands = rep.t_hat, rep.candidates_evaluated
    elif cfg.estimator == "pwda":
        rep = estimate_pwda(ctx, cfg.estimator_config)
        t_hat, cands = rep.t_hat, rep.candidates_evaluated
    elif cfg.estimator == "var":
        t_hat, cands = var_estimate(ctx).t_hat, 0
    elif cfg.estimator == "t1":
        from .initial import surrogate_minimizer
        t_hat, cands = surrogate_minimizer(ctx), 0
    else:
        raise ValueError(f"unknown estimator {cfg.estimator!r}")
    ms = (time.perf_counter() - start) * 1e3
    return (t_hat - params.t0) ** 2, float(cands), ms


def _mse_row(cfg: ExperimentConfig, grid_value: float, params: ModelParams) -> ResultRow:
    lattice = make_lattice(params, cfg.lattice_kind, cache_path=cfg.cache_path)
    regime_cfg = replace(cfg.estimator_config, regime=_regime_for(cfg.lattice_kind))
    cfg = replace(cfg, estimator_config=regime_cfg)
    seeds = [trial_seed(cfg.master_seed, i) for i in range(cfg.trials)]
    workers = _threads(cfg)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(lambda s: _one_error(params, lattice, cfg, s), seeds))
    else:
        out = [_one_error(params, lattice, cfg, s) for s in seeds]
    sq = np.array([o[0] for o in out])
    bound = mse_lower_bound(params)
    ms = float(np.mean([o[2] for o in out])) if cfg.include_timing else 0.0
    return ResultRow(grid_value=grid_value,
                     empirical_mse=float(sq.mean()),
                     mc_stderr=float(sq.std(ddof=1) / math.sqrt(len(sq))),
                     mse_bound=bound,
                     crb_component=1.0 / fisher_asymptotic(params),
                     bias_component=bias_asymptotic(params) ** 2,
                     mean_candidates=float(np.mean([o[1] for o in out])),
                     mean_runtime_ms=ms)


def _coverage_row(cfg: ExperimentConfig, pe1: float) -> ResultRow:
    alpha = _alpha_for(cfg, cfg.t0_fixed)
    params = derive_params(cfg.dwr_db, cfg.wnr_db, alpha, cfg.t0_fixed, cfg.n)
    lattice = make_lattice(params, cfg.lattice_kind, cache_path=cfg.cache_path)
    misses = 0
    start = time.perf_counter()
    for i in range(cfg.trials):
        trial = make_trial(params, lattice, trial_seed(cfg.master_seed, i))
        ctx = make_context(trial, params, lattice)
        t1 = var_estimate(ctx).t_hat
        if t1 <= 0:
            from .initial import surrogate_minimizer
            t1 = surrogate_minimizer(ctx)
        b = partially_prob_bounds(ctx, t1, pe1)
        up = prob_upper(ctx, t1, pe1) if pe1 > 0 else math.inf
        if not (b.t_lower <= params.t0 <= b.t_upper) or params.t0 > up:
            misses += 1
    ms = (time.perf_counter() - start) * 1e3 / cfg.trials if cfg.include_timing else 0.0
    freq = misses / cfg.trials
    return ResultRow(grid_value=pe1, empirical_mse=freq,
                     mc_stderr=math.sqrt(max(freq * (1 - freq), 1e-12) / cfg.trials),
                     mse_bound=pe1, crb_component=0.0, bias_component=0.0,
                     mean_candidates=0.0, mean_runtime_ms=ms)


def _nondiff_row(cfg: ExperimentConfig, n: int) -> ResultRow:
    alpha = _alpha_for(cfg, cfg.t0_fixed)
    params = derive_params(cfg.dwr_db, cfg.wnr_db, alpha, cfg.t0_fixed, int(n))
    lattice = make_lattice(params, "scalar")
    crb_t = var_estimator_crb(params) / (4.0 * params.t0**2)
    radius = 5.0 * math.sqrt(crb_t)
    counts = []
    start = time.perf_counter()
    for i in range(cfg.trials):
        trial = make_trial(params, lattice, trial_seed(cfg.master_seed, i))
        ctx = make_context(trial, params, lattice)
        center = var_estimate(ctx).t_hat
        if center <= radius:
            center = params.t0
        counts.append(count_nondifferentiable((center - radius, center + radius),
                                              trial.z, trial.d, lattice.delta))
    ms = (time.perf_counter() - start) * 1e3 / cfg.trials if cfg.include_timing else 0.0
    counts = np.array(counts, dtype=float)
    return ResultRow(grid_value=float(n), empirical_mse=float(counts.mean()),
                     mc_stderr=float(counts.std(ddof=1) / math.sqrt(len(counts))),
                     mse_bound=0.0, crb_component=0.0, bias_component=0.0,
                     mean_candidates=0.0, mean_runtime_ms=ms)


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Rows in grid order; deterministic given the master seed."""
    rows = []
    if cfg.experiment == "sweep_t0":
        for t0 in cfg.grid:
            alpha = _alpha_for(cfg, t0)
            params = derive_params(cfg.dwr_db, cfg.wnr_db, alpha, t0, cfg.n)
            rows.append(_mse_row(cfg, t0, params))
    elif cfg.experiment == "sweep_alpha":
        for alpha in cfg.grid:
            params = derive_params(cfg.dwr_db, cfg.wnr_db, float(alpha), cfg.t0_fixed, cfg.n)
            rows.append(_mse_row(cfg, float(alpha), params))
    elif cfg.experiment == "interval_coverage":
        for pe1 in cfg.grid:
            rows.append(_coverage_row(cfg, float(pe1)))
    elif cfg.experiment == "nondiff_scaling":
        for n in cfg.grid:
            rows.append(_nondiff_row(cfg, int(n)))
    elif cfg.experiment == "theory_table":
        for t0 in cfg.grid:
            alpha = _alpha_for(cfg, t0)
            params = derive_params(cfg.dwr_db, cfg.wnr_db, alpha, t0, cfg.n)
            rows.append(ResultRow(grid_value=t0, empirical_mse=0.0, mc_stderr=0.0,
                                  mse_bound=mse_lower_bound(params),
                                  crb_component=1.0 / fisher_asymptotic(params),
                                  bias_component=bias_asymptotic(params) ** 2,
                                  mean_candidates=0.0, mean_runtime_ms=0.0))
    else:
        raise ValueError(f"unknown experiment {cfg.experiment!r}")
    return rows


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_csv(rows: list[ResultRow], path: str) -> None:
    """One header line plus one line per row, floats at 17 significant digits."""
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in (
                    r.grid_value, r.empirical_mse, r.mc_stderr, r.mse_bound,
                    r.crb_component, r.bias_component, r.mean_candidates,
                    r.mean_runtime_ms)) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path!r}: {exc}") from exc


def parse_csv(path: str) -> list[ResultRow]:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path!r}: {header}")
        for line in fh:
            vals = [float(v) for v in line.strip().split(",")]
            rows.append(ResultRow(*vals))
    return rows


def emit_svg_plot(rows, path: str, title: str = "") -> None:
    """Log-scale MSE curves with the closed-form floor overlaid.

    ``rows`` is either one row list or a mapping of series name to row list;
    the output holds exactly one ``<path>`` element per series plus one for
    the floor (taken from the first series)."""
    series = rows if isinstance(rows, dict) else {"mse": rows}
    if not series:
        raise ValueError("nothing to plot")
    first = next(iter(series.values()))
    width, height, pad = 640, 420, 56
    xs = [r.grid_value for r in first]
    all_vals = [max(v, 1e-300) for rs in series.values() for r in rs
                for v in (r.empirical_mse,) if v > 0]
    all_vals += [r.mse_bound for r in first if r.mse_bound > 0]
    if not all_vals:
        all_vals = [1e-6, 1.0]
    lo, hi = math.log10(min(all_vals)) - 0.2, math.log10(max(all_vals)) + 0.2
    x0, x1 = min(xs), max(xs)

    def px(x):
        if x1 == x0:
            return width / 2
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        v = math.log10(max(v, 1e-300))
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    def path_for(pts):
        return "M " + " L ".join(f"{px(x):.2f} {py(v):.2f}" for x, v in pts)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>']
    if title:
        parts.append(f'<text x="{width/2:.0f}" y="24" text-anchor="middle">{title}</text>')
    for k, (name, rs) in enumerate(series.items()):
        pts = [(r.grid_value, r.empirical_mse) for r in rs if r.empirical_mse > 0]
        if not pts:
            pts = [(r.grid_value, 1e-300) for r in rs]
        color = colors[k % len(colors)]
        parts.append(f'<path d="{path_for(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width-pad+4}" y="{py(pts[-1][1]):.0f}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    bound_pts = [(r.grid_value, r.mse_bound) for r in first if r.mse_bound > 0]
    if not bound_pts:
        bound_pts = [(r.grid_value, 1e-300) for r in first]
    parts.append(f'<path d="{path_for(bound_pts)}" fill="none" stroke="black" '
                 f'stroke-dasharray="6 3" stroke-width="1.2"/>')
    parts.append("</svg>")
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG to {path!r}: {exc}") from exc
