"""The estimation algorithms: local refiners, lock tests, and the pipelines.

``refine_derivative`` walks a forward-difference sign out of the start point
(doubling steps), then bisects the bracket down to the requested width --
dependable but objective-evaluation hungry.

``refine_da`` is decision-aided: decode the dithered centroid at the trial
gain, then least-squares-fit the gain onto the decoded centroid
(t = ||z||^2 / (z . centroid)); one objective evaluation per candidate.

``estimate`` runs the full pipeline: initial gain, search interval, candidate
set, refinement of every candidate, argmin with a fallback to the initial
gain if nothing improved on it.

``estimate_pwda`` expands outward from the initial gain instead of sweeping
the whole candidate set, stopping as soon as a refined point passes both lock
tests (consistent with the at-true-gain law, inconsistent with the far law).

``estimate_online`` is the streaming variant: one decision-aided update per
arriving sample while locked; a full interval-plus-candidates search on the
prefix when unlocked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleProbabilityError, RunawayError
from .initial import surrogate_minimizer, var_estimate
from .intervals import (
    IntervalBounds,
    deterministic_bounds,
    partially_prob_bounds,
    var_based_bounds,
)
from .model import ModelParams
from .sampling import build_candidates, lowdim_step
from .specfun import gauss_quantile
from .target import TargetContext, context_from_observation, objective, objective_moments


@dataclass(frozen=True)
class TauThresholds:
    """Acceptance levels for the two lock tests at one gain value."""

    tau_eq: float    # objective must be below this to look like the true gain
    tau_neq: float   # ... and below this to not look like a far point
    pe2: float
    pe3: float


@dataclass(frozen=True)
class EstimatorConfig:
    """Pipeline configuration: which initial estimate, interval, sampling
    rule, and refiner to use, plus the test probabilities."""

    t1_method: str = "variance"          # variance | surrogate
    bounds_method: str = "partprob"      # det | partprob | var
    use_clt: bool = False
    sampler_rule: str = "lowdim"         # lowdim | hybrid
    k1: float = 0.5
    refiner: str = "da"                  # da | derivative
    regime: str = "scalar"               # scalar | goodlattice
    pe1: float = 1e-3
    pe2: float = 1e-3
    pe3: float = 1e-3
    pe4: float = 1e-6
    pe5: float = 1e-6
    eps1: float = 1e-5
    eps2: float = 1e-5


@dataclass
class EstimateReport:
    """Everything one pipeline run decided and measured."""

    t_hat: float
    t1_used: float
    bounds: IntervalBounds | None
    candidates_evaluated: int
    per_candidate: list[tuple[float, float, float]]  # (t_start, t_refined, value)
    tests_passed: dict = field(default_factory=dict)
    fell_back_to_t1: bool = False
    bounds_fallback: str | None = None


def refine_derivative(t_start: float, ctx: TargetContext,
                      eps1: float = 1e-5, eps2: float = 1e-5) -> tuple[float, float]:
    """Sign-of-forward-difference expansion then bisection to width eps2;
    returns a point where the finite-difference slope changes sign and the
    objective value there."""
    if t_start <= 0 or eps1 <= 0 or eps2 <= 0:
        raise ValueError("t_start, eps1 and eps2 must be positive")
    s0 = math.copysign(1.0, objective(t_start + eps1, ctx) - objective(t_start, ctx))
    s1 = s0
    step = 1e-3
    t_aux = t_start
    while s1 == s0:
        step *= 2.0
        t_aux = abs(t_start - s0 * step)
        if step > 1e3 * t_start:
            raise RunawayError(
                f"derivative refiner expansion exceeded 1000x the start point {t_start}")
        s1 = math.copysign(1.0, objective(t_aux + eps1, ctx) - objective(t_aux, ctx))
    t_lo = min(t_start, t_aux)
    t_hi = max(t_start, t_aux)
    while t_hi - t_lo > eps2:
        t_aux = 0.5 * (t_hi + t_lo)
        s1 = math.copysign(1.0, objective(t_aux + eps1, ctx) - objective(t_aux, ctx))
        if s1 > 0:
            t_hi = t_aux
        else:
            t_lo = t_aux
    return t_aux, objective(t_aux, ctx)


def refine_da(t_start: float, ctx: TargetContext) -> tuple[float, float]:
    """Decision-aided refinement: one decode, one projection, one objective
    evaluation.  A nonpositive projection denominator rejects the candidate
    (returned value +inf)."""
    if t_start <= 0:
        raise ValueError(f"t_start must be positive, got {t_start}")
    centroid = ctx.lattice.quantize(ctx.z / t_start - ctx.d) + ctx.d
    denom = float(ctx.z @ centroid)
    if denom <= 0.0:
        return math.nan, math.inf
    t_aux = ctx.znorm2 / denom
    return t_aux, objective(t_aux, ctx)


def _refine_da_batch(ts: np.ndarray, ctx: TargetContext) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decision-aided refinement over a batch of start gains."""
    ts = np.asarray(ts, dtype=float)
    u = ctx.z[None, :] / ts[:, None] - ctx.d[None, :]
    centroids = ctx.lattice.quantize(u) + ctx.d[None, :]
    denom = centroids @ ctx.z
    ok = denom > 0.0
    t_ref = np.full(len(ts), math.nan)
    values = np.full(len(ts), math.inf)
    t_ref[ok] = ctx.znorm2 / denom[ok]
    if np.any(ok):
        values[ok] = objective(t_ref[ok], ctx)
    return t_ref, values


def lock_thresholds(t: float, ctx: TargetContext, pe2: float, pe3: float,
                    regime: str = "scalar") -> TauThresholds:
    """Objective-level thresholds for the two lock tests at gain t.

    The at-true-gain law is evaluated with t playing the true gain; the far
    law uses the observed host power (no true gain needed) and only the
    residual term's variance."""
    at = objective_moments(t, ctx.params, f"at_t0_{regime}", t0_hypothesis=t)
    far = objective_moments(t, ctx.params, f"far_{regime}", znorm2=ctx.znorm2)
    tau_eq = at.mean + math.sqrt(at.variance) * gauss_quantile(pe2)
    tau_neq = far.mean + math.sqrt(far.variance) * gauss_quantile(1.0 - pe3)
    return TauThresholds(tau_eq=tau_eq, tau_neq=tau_neq, pe2=pe2, pe3=pe3)


def _initial_estimate(ctx: TargetContext, config: EstimatorConfig) -> tuple[float, object]:
    if config.t1_method == "variance":
        est = var_estimate(ctx)
        t1 = est.t_hat
        if t1 <= 0.0:
            # fully clamped observation: fall back to the smooth surrogate
            t1 = surrogate_minimizer(ctx)
        return t1, est
    if config.t1_method == "surrogate":
        return surrogate_minimizer(ctx), None
    raise ValueError(f"unknown t1 method {config.t1_method!r}")


def _bounds_for(ctx: TargetContext, t1: float, est, config: EstimatorConfig
                ) -> tuple[IntervalBounds, str | None]:
    if ctx.params.alpha >= 1.0 and config.bounds_method in ("det", "partprob"):
        # no self-noise term: the envelope loses its interior minimum, so the
        # envelope-based intervals degenerate; use the estimator-law interval
        if est is None:
            est = var_estimate(ctx)
        return (var_based_bounds(est, ctx.params, config.pe1),
                "alpha=1: envelope bounds degenerate; used estimator-law bounds")
    if config.bounds_method == "det":
        return deterministic_bounds(ctx, t1), None
    if config.bounds_method == "partprob":
        return partially_prob_bounds(ctx, t1, config.pe1, config.use_clt), None
    if config.bounds_method == "var":
        if est is None:
            est = var_estimate(ctx)
        try:
            return var_based_bounds(est, ctx.params, config.pe1), None
        except InfeasibleProbabilityError:
            return (partially_prob_bounds(ctx, t1, config.pe1, config.use_clt),
                    "var-bounds infeasible at pe1; used partially probabilistic bounds")
    raise ValueError(f"unknown bounds method {config.bounds_method!r}")


def estimate(ctx: TargetContext, config: EstimatorConfig = EstimatorConfig()) -> EstimateReport:
    """Full pipeline: initial gain, interval, candidates, refinement, argmin
    with fallback to the initial gain."""
    t1, est = _initial_estimate(ctx, config)
    bounds, fb = _bounds_for(ctx, t1, est, config)
    cands = build_candidates(bounds, ctx.params, rule=config.sampler_rule, k1=config.k1)
    if config.refiner in ("da", "da_polish"):
        t_ref, values = _refine_da_batch(cands.points, ctx)
        if config.refiner == "da_polish":
            # one batched local grid around the winning projection removes
            # the single-decode offset and its wrong-coordinate tail noise
            best = int(np.argmin(values))
            if math.isfinite(values[best]):
                tb = float(t_ref[best])
                p = ctx.params
                sd = math.sqrt((p.sigma_n2 + (1 - p.alpha) ** 2 * tb**2 * p.sigma_lam2)
                               / (ctx.n * p.sigma_x2))
                grid = tb + np.linspace(-4.0, 4.0, 41) * sd
                grid = np.append(grid[grid > 0], tb)
                vals = objective(grid, ctx)
                j = int(np.argmin(vals))
                if vals[j] < values[best]:
                    t_ref[best], values[best] = float(grid[j]), float(vals[j])
        per = list(zip(cands.points.tolist(), t_ref.tolist(), values.tolist()))
    elif config.refiner == "derivative":
        per = []
        for t in cands.points:
            try:
                tr, val = refine_derivative(float(t), ctx, config.eps1, config.eps2)
            except RunawayError:
                # far-region kinks can defeat the sign expansion; reject
                tr, val = math.nan, math.inf
            per.append((float(t), tr, val))
        values = np.array([v for _, _, v in per])
        t_ref = np.array([r for _, r, _ in per])
    else:
        raise ValueError(f"unknown refiner {config.refiner!r}")
    best = int(np.argmin(values))
    t1_value = objective(t1, ctx)
    if values[best] < t1_value:
        t_hat = float(t_ref[best])
        fell_back = False
    else:
        t_hat = t1
        fell_back = True
    return EstimateReport(t_hat=t_hat, t1_used=t1, bounds=bounds,
                          candidates_evaluated=len(cands.points), per_candidate=per,
                          tests_passed={}, fell_back_to_t1=fell_back, bounds_fallback=fb)


def estimate_pwda(ctx: TargetContext, config: EstimatorConfig = EstimatorConfig()
                  ) -> EstimateReport:
    """Progressively widened decision-aided search: expand probes outward
    from the initial gain, stopping once the best refined point passes both
    lock tests.  On exhaustion it reduces to the full sweep over the probed
    points.

    The down-probe is skipped on the second iteration, matching the
    published procedure's control flow as stated (see package docs)."""
    t1, est = _initial_estimate(ctx, config)
    bounds, fb = _bounds_for(ctx, t1, est, config)
    t_u = t1
    t_l = t1
    i = 1
    found = False
    per: list[tuple[float, float, float]] = []
    tests: dict = {}
    guard = 0
    while (t_u <= bounds.t_upper or t_l >= bounds.t_lower) and not found:
        guard += 1
        if guard > 1_000_000:
            raise RunawayError("progressive widening failed to exhaust the interval")
        if t_u <= bounds.t_upper:
            start = t_u
            tr, val = refine_da(t_u, ctx)
            per.append((start, tr, val))
            i += 1
            t_u = lowdim_step(t_u, ctx.params, config.k1, "up")
        if t_l >= bounds.t_lower:
            if i != 2:
                start = t_l
                tr, val = refine_da(t_l, ctx)
                per.append((start, tr, val))
                i += 1
            t_l = lowdim_step(t_l, ctx.params, config.k1, "down")
        if not per:
            break
        values = [v for _, _, v in per]
        best = int(np.argmin(values))
        t_best = per[best][1]
        if math.isfinite(t_best) and t_best > 0:
            tau = lock_thresholds(t_best, ctx, config.pe2, config.pe3, config.regime)
            eq_ok = per[best][2] < tau.tau_eq
            neq_ok = per[best][2] < tau.tau_neq
            tests = {"eq": eq_ok, "neq": neq_ok}
            if eq_ok and neq_ok:
                found = True
    if per:
        values = [v for _, _, v in per]
        best = int(np.argmin(values))
        best_val = values[best]
        t_best = per[best][1]
    else:
        best_val = math.inf
        t_best = t1
    t1_value = objective(t1, ctx)
    if best_val < t1_value:
        t_hat = t_best
        fell_back = False
    else:
        t_hat = t1
        fell_back = True
    return EstimateReport(t_hat=t_hat, t1_used=t1, bounds=bounds,
                          candidates_evaluated=len(per), per_candidate=per,
                          tests_passed=tests, fell_back_to_t1=fell_back, bounds_fallback=fb)


@dataclass(frozen=True)
class OnlineSample:
    """Per-sample record of the streaming estimator."""

    index: int
    estimate: float
    locked: bool
    t1_used: float
    searched: bool


def estimate_online(z_stream: np.ndarray, d_stream: np.ndarray, params: ModelParams,
                    lattice, config: EstimatorConfig = EstimatorConfig(),
                    min_prefix: int = 1):
    """Streaming decision-aided estimation over growing prefixes.

    Yields one :class:`OnlineSample` per arriving observation.  While locked,
    each sample costs one decode plus the two lock tests; when a test fails,
    a full interval-plus-candidate search runs on the prefix with the colder
    probabilities (pe4, pe5) deciding the relock."""
    z_stream = np.asarray(z_stream, dtype=float)
    d_stream = np.asarray(d_stream, dtype=float)
    if z_stream.shape != d_stream.shape:
        raise ValueError("observation and dither streams must align")
    locked = False
    t_online = math.nan
    for j in range(min_prefix, len(z_stream) + 1):
        prefix_params = replace(params, n=j)
        ctx = context_from_observation(z_stream[:j], d_stream[:j], prefix_params, lattice)
        if not locked:
            t1, _ = _initial_estimate(ctx, config)
        else:
            t1 = t_online
        t1_initial = t1
        t3, val3 = refine_da(t1, ctx)
        if math.isfinite(t3) and t3 > 0:
            tau = lock_thresholds(t3, ctx, config.pe2, config.pe3, config.regime)
            if val3 < tau.tau_eq and val3 < tau.tau_neq:
                locked = True
                t_online = t3
                yield OnlineSample(index=j, estimate=t_online, locked=True,
                                   t1_used=t1_initial, searched=False)
                continue
        # unlock path: full search on the prefix from t3 (or t1 if the
        # projection was rejected)
        anchor = t3 if (math.isfinite(t3) and t3 > 0) else t1
        bounds = partially_prob_bounds(ctx, anchor, config.pe1, config.use_clt)
        cands = build_candidates(bounds, ctx.params, rule=config.sampler_rule, k1=config.k1)
        t_ref, values = _refine_da_batch(cands.points, ctx)
        best = int(np.argmin(values))
        if values[best] < objective(t1, ctx):
            t1 = float(t_ref[best])
        tau = lock_thresholds(t1, ctx, config.pe4, config.pe5, config.regime)
        v1 = objective(t1, ctx)
        locked = v1 < tau.tau_eq and v1 < tau.tau_neq
        t_online = t1
        yield OnlineSample(index=j, estimate=t_online, locked=locked,
                           t1_used=t1_initial, searched=True)
