"""Search-interval lower and upper bounds for the gain optimization.

Every method derives an interval [t_lower, t_upper] guaranteed (exactly, or
with probability 1 - P_e1) to contain the objective's minimizer or the true
gain, from one evaluation of the objective at the initial estimate plus O(1)
work on the envelope:

* ``deterministic_bounds`` -- equation  envelope(t) = objective(t1)  solved on
  both sides of the envelope's minimizer; always contains the argmin.
* ``partially_prob_bounds`` -- same equation relaxed by a chi-square (or CLT)
  quantile of the residual term's law at the true gain.
* ``deterministic_upper_closed`` -- closed form from the log-term-only bound.
* ``prob_upper`` -- closed form from the chi-square law of both random terms
  at the true gain (or its CLT variant).
* ``var_based_bounds`` -- closed forms from the sampling law of the
  power-matching estimator; subject to feasibility floors on P_e1.

Implicit equations are solved by bisection (brackets are guaranteed by the
envelope's single-minimum shape); the lower bracket is floored at 1e-6 times
the envelope minimizer to stay clear of the t -> 0 divergence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import (
    DegenerateInputError,
    DegenerateSampleSizeError,
    InfeasibleProbabilityError,
)
from .initial import VarEstimate
from .model import ModelParams
from .specfun import chi2_quantile, gauss_quantile, gauss_upper_tail
from .target import TargetContext, envelope, objective


@dataclass(frozen=True)
class IntervalBounds:
    """A search interval with its method tag and the probability it used."""

    t_lower: float
    t_upper: float
    method: str                 # det | partprob | det2_upper | prob_upper | var
    pe_used: float | None
    t2: float | None            # the envelope minimizer, where applicable
    collapsed: bool = False

    def __post_init__(self):
        if self.t_lower > self.t_upper:
            raise ValueError("t_lower must not exceed t_upper")


def envelope_minimizer(ctx: TargetContext) -> float:
    """The single positive stationary point of the envelope,
    t2^2 = (||z||^2 + ||z|| sqrt(||z||^2 + 4 n sN^2 sX^2 / ((1-a)^2 sL^2))) / (2 n sX^2)."""
    if ctx.znorm2 <= 0.0:
        raise DegenerateInputError("envelope minimizer needs ||z||^2 > 0")
    p = ctx.params
    zz = ctx.znorm2
    znorm = math.sqrt(zz)
    t2sq = (zz + znorm * math.sqrt(zz + 4.0 * ctx.n * p.sigma_n2 * p.sigma_x2
                                   / ((1.0 - p.alpha) ** 2 * p.sigma_lam2))) \
        / (2.0 * ctx.n * p.sigma_x2)
    return math.sqrt(t2sq)


def envelope_minimizer_limit(params: ModelParams, deep: bool = False) -> float:
    """Large-sample limit of the envelope minimizer (||z||^2 at its mean);
    with ``deep=True`` the further simplification for a dominant host."""
    p = params
    if deep:
        return math.sqrt((p.t0**2 + p.t0 * math.sqrt(
            p.t0**2 + 4.0 * p.sigma_n2 / ((1.0 - p.alpha) ** 2 * p.sigma_lam2))) / 2.0)
    c = (p.sigma_x2 + p.alpha**2 * p.sigma_lam2) * p.t0**2 + p.sigma_n2
    return math.sqrt((c + math.sqrt(c) * math.sqrt(
        c + 4.0 * p.sigma_n2 * p.sigma_x2 / ((1.0 - p.alpha) ** 2 * p.sigma_lam2)))
        / (2.0 * p.sigma_x2))


def _solve_envelope_below(ctx: TargetContext, t2: float, level: float) -> float:
    """Largest t <= t2 with envelope(t) = level (envelope decreasing there)."""
    lo = 1e-6 * t2
    while envelope(lo, ctx) < level:
        lo *= 0.1
        if lo < 1e-250:
            raise DegenerateInputError("failed to bracket the lower bound")
    hi = t2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if envelope(mid, ctx) >= level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def _solve_envelope_above(ctx: TargetContext, t2: float, level: float) -> float:
    """Smallest t >= t2 with envelope(t) = level (envelope increasing there)."""
    hi = 2.0 * t2
    while envelope(hi, ctx) < level:
        hi *= 2.0
        if hi > 1e250:
            raise DegenerateInputError("failed to bracket the upper bound")
    lo = t2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if envelope(mid, ctx) >= level:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def deterministic_bounds(ctx: TargetContext, t1: float) -> IntervalBounds:
    """The interval where the envelope stays below objective(t1); the
    objective's global minimizer always lies inside."""
    if t1 <= 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    t2 = envelope_minimizer(ctx)
    level = objective(t1, ctx)
    if envelope(t2, ctx) >= level:
        return IntervalBounds(t_lower=t2, t_upper=t2, method="det", pe_used=None,
                              t2=t2, collapsed=True)
    return IntervalBounds(t_lower=_solve_envelope_below(ctx, t2, level),
                          t_upper=_solve_envelope_above(ctx, t2, level),
                          method="det", pe_used=None, t2=t2)


def partially_prob_bounds(ctx: TargetContext, t1: float, pe1: float,
                          use_clt: bool = False) -> IntervalBounds:
    """Deterministic bounds relaxed by the residual-term quantile: solves
    envelope(t) = objective(t1) - Q_residual(pe1) on both sides.

    With ``use_clt`` the chi-square quantile (n dof) is replaced by its
    Gaussian approximation n - sqrt(2n) * gauss_quantile(pe1)."""
    if t1 <= 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    if not 0.0 <= pe1 < 1.0:
        raise ValueError(f"pe1 must lie in [0,1), got {pe1}")
    n = ctx.n
    if pe1 == 0.0:
        shift = 0.0
    elif use_clt:
        shift = n - math.sqrt(2.0 * n) * gauss_quantile(pe1)
    else:
        shift = chi2_quantile(pe1, n)
    t2 = envelope_minimizer(ctx)
    level = objective(t1, ctx) - shift
    if envelope(t2, ctx) >= level:
        return IntervalBounds(t_lower=t2, t_upper=t2, method="partprob", pe_used=pe1,
                              t2=t2, collapsed=True)
    return IntervalBounds(t_lower=_solve_envelope_below(ctx, t2, level),
                          t_upper=_solve_envelope_above(ctx, t2, level),
                          method="partprob", pe_used=pe1, t2=t2)


def deterministic_upper_closed(ctx: TargetContext, t1: float) -> float:
    """Closed-form upper bound from the log-term-only envelope:
    sqrt([exp(objective(t1)/n)/(2 pi) - sigma_N^2] / ((1-a)^2 sigma_L^2)).

    Always at least the deterministic upper bound on the same inputs.  A
    negative radicand (possible only for extreme inputs) falls back to the
    deterministic upper bound with a warning."""
    if t1 <= 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    p = ctx.params
    rad = math.exp(objective(t1, ctx) / ctx.n) / (2.0 * math.pi) - p.sigma_n2
    if rad < 0.0:
        warnings.warn("closed-form upper bound radicand negative; "
                      "falling back to the deterministic bound", RuntimeWarning)
        return deterministic_bounds(ctx, t1).t_upper
    return math.sqrt(rad / ((1.0 - p.alpha) ** 2 * p.sigma_lam2))


def prob_upper(ctx: TargetContext, t1: float, pe1: float, use_clt: bool = False) -> float:
    """Closed-form probabilistic upper bound: the unique solution of
    log_term(t) = objective(t1) - Q_{both-random-terms}(pe1), clamped at zero.

    The quantile defaults to chi-square with 2n dof; ``use_clt`` replaces it
    by 2n - sqrt(4n) * gauss_quantile(pe1)."""
    if t1 <= 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    if not 0.0 < pe1 < 1.0:
        raise ValueError(f"pe1 must lie in (0,1), got {pe1}")
    n = ctx.n
    if use_clt:
        shift = 2.0 * n - math.sqrt(4.0 * n) * gauss_quantile(pe1)
    else:
        shift = chi2_quantile(pe1, 2 * n)
    p = ctx.params
    rad = math.exp((objective(t1, ctx) - shift) / n) / (2.0 * math.pi) - p.sigma_n2
    return math.sqrt(max(rad, 0.0) / ((1.0 - p.alpha) ** 2 * p.sigma_lam2))


def var_based_feasibility_floors(t1_var: VarEstimate, params: ModelParams) -> tuple[float, float]:
    """(lower-bound floor, upper-bound floor) on the usable P_e1."""
    p = params
    s = p.sigma_x2 + p.alpha**2 * p.sigma_lam2
    root = math.sqrt(p.n / 2.0)
    return gauss_upper_tail(root * t1_var.t2_hat * s / p.sigma_n2), gauss_upper_tail(root)


def var_based_bounds(t1_var: VarEstimate, params: ModelParams, pe1: float) -> IntervalBounds:
    """Closed-form interval from the sampling law of the power-matching
    estimator.  Requires pe1 above both feasibility floors and n > 2 xi^2
    with xi the Gaussian quantile of pe1."""
    if not 0.0 < pe1 < 1.0:
        raise ValueError(f"pe1 must lie in (0,1), got {pe1}")
    p = params
    floor_lo, floor_hi = var_based_feasibility_floors(t1_var, p)
    floor = max(floor_lo, floor_hi)
    if pe1 < floor:
        raise InfeasibleProbabilityError(
            f"pe1={pe1} below the method's feasibility floor {floor:.3e}", floor=floor)
    xi = gauss_quantile(pe1)
    n = p.n
    if n <= 2.0 * xi * xi:
        raise DegenerateSampleSizeError(
            f"n={n} too small for the closed form (needs n > 2 xi^2 = {2*xi*xi:.3f})")
    s = p.sigma_x2 + p.alpha**2 * p.sigma_lam2
    t1sq = t1_var.t2_hat
    core = n * s * t1sq + 2.0 * xi * xi * p.sigma_n2
    wing = math.sqrt(2.0 * n) * xi * (s * t1sq + p.sigma_n2)
    denom = (n - 2.0 * xi * xi) * s
    lo_sq = max((core - wing) / denom, 0.0)
    hi_sq = (core + wing) / denom
    return IntervalBounds(t_lower=math.sqrt(lo_sq), t_upper=math.sqrt(hi_sq),
                          method="var", pe_used=pe1, t2=None)
