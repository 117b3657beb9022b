"""Closed-form theory: information, bias, and mean-squared-error floors.

All expressions live in the regime where the modulo reduction can be
neglected around the true gain (large host-to-lattice ratio, saturation
ratio below one); the Monte-Carlo curvature oracle measures exactly that
quantity by excluding trials whose lattice decision flips inside the
finite-difference stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, make_trial, trial_seed
from .target import make_context, objective

_EPS_SUP = 1e-9  # margin keeping the saturation ratio strictly below one


def fisher_exact(params: ModelParams) -> float:
    """Information about the gain in one block: the full three-term form
    (host, cross, and power terms) before any asymptotic simplification."""
    p = params
    a, sl2, sx2, sn2, t0 = p.alpha, p.sigma_lam2, p.sigma_x2, p.sigma_n2, p.t0
    n = p.n
    one_a2 = (1.0 - a) ** 2
    dv = sn2 + one_a2 * sl2 * t0**2
    big = (sn2**2 * (sx2 + a**2 * sl2)
           + one_a2**2 * sl2**2 * t0**2
           * (t0**2 * sx2 + t0**2 * (3.0 * a - 2.0) * a**3 * sl2 + 3.0 * sn2)
           - one_a2 * sl2 * sn2
           * (3.0 * t0**2 * (sx2 + a**2 * sl2) + sn2
              - 6.0 * t0**2 * (sx2 + a**3 * sl2) + t0**2 * (sx2 + a**4 * sl2)))
    mid = one_a2 * sl2 * sn2 - one_a2**2 * sl2**2 * t0**2
    power = 3.0 * n * ((sx2 + a**2 * sl2) * t0**2 + sn2) / (sx2 * t0**4)
    return n * big / dv**3 + n * mid / dv**2 + power


def fisher_middle_term(params: ModelParams) -> float:
    """The cross term alone; bounded in [-n/t0^2, n/(2 t0^2)]."""
    p = params
    one_a2 = (1.0 - p.alpha) ** 2
    dv = p.sigma_n2 + one_a2 * p.sigma_lam2 * p.t0**2
    mid = one_a2 * p.sigma_lam2 * p.sigma_n2 - one_a2**2 * p.sigma_lam2**2 * p.t0**2
    return p.n * mid / dv**2


def fisher_asymptotic(params: ModelParams) -> float:
    """n sigma_X^2 / (sigma_N^2 + ((1-a)^2/a^2) sigma_W^2 t0^2), the dominant
    host term in the large-host, sub-saturation regime."""
    p = params
    return p.n * p.sigma_x2 / (p.sigma_n2 + ((1.0 - p.alpha) ** 2 / p.alpha**2)
                               * p.sigma_w2 * p.t0**2)


def fisher_asymptotic_alt(params: ModelParams) -> float:
    """Algebraically identical form written for the alternative embedding
    convention: n a^2 sigma_X^2 / (a^2 sigma_N^2 + (1-a)^2 sigma_W^2 t0^2)."""
    p = params
    a2 = p.alpha**2
    return p.n * a2 * p.sigma_x2 / (a2 * p.sigma_n2
                                    + (1.0 - p.alpha) ** 2 * p.sigma_w2 * p.t0**2)


def alpha_max_fisher(params: ModelParams) -> float:
    """Supremum of the compensation values keeping the saturation ratio
    below one: min(2 sW^2 t0^2 / (sN^2 + sW^2 t0^2) - eps, 1)."""
    p = params
    return min(2.0 * p.sigma_w2 * p.t0**2 / (p.sigma_n2 + p.sigma_w2 * p.t0**2) - _EPS_SUP,
               1.0)


def alpha_opt(params: ModelParams) -> float:
    """Feasible compensation minimizing the total MSE floor: the stationary
    value (n sW^2 t0^2 + sX^2 t0^2) / (n sN^2 + n sW^2 t0^2 + sX^2 t0^2)
    capped by the saturation supremum."""
    p = params
    stationary = (p.n * p.sigma_w2 * p.t0**2 + p.sigma_x2 * p.t0**2) \
        / (p.n * p.sigma_n2 + p.n * p.sigma_w2 * p.t0**2 + p.sigma_x2 * p.t0**2)
    return min(stationary,
               2.0 * p.sigma_w2 * p.t0**2 / (p.sigma_n2 + p.sigma_w2 * p.t0**2) - _EPS_SUP)


def bias_taylor(params: ModelParams) -> tuple[float, float, float, float]:
    """Quadratic expansion of the smoothed objective per sample around the
    true gain: (b0, b1, b2, t_min) with t_min = t0 - b1/b2."""
    p = params
    a, sl2, sx2, sn2, t0 = p.alpha, p.sigma_lam2, p.sigma_x2, p.sigma_n2, p.t0
    if t0 <= 1e-12:
        raise ValueError("true gain too small for the expansion; use bias_t0_zero")
    dv = sn2 + (1.0 - a) ** 2 * sl2 * t0**2
    zvar = (sx2 + a**2 * sl2) * t0**2 + sn2
    b0 = 2.0 + (sn2 + a**2 * sl2 * t0**2) / (sx2 * t0**2) + math.log(2.0 * math.pi * dv)
    b1 = 2.0 * (1.0 - a) * sl2 * t0 / dv - 2.0 * zvar / (sx2 * t0**3)
    b2 = (4.0 * (1.0 - a) ** 2 * sl2 * sn2
          + 2.0 * ((2.0 * a**2 - 1.0) * sl2 + sx2) * dv) / dv**2 \
        + 6.0 * zvar / (sx2 * t0**4)
    return b0, b1, b2, t0 - b1 / b2


def bias_asymptotic(params: ModelParams) -> float:
    """(1/sigma_X^2) [sigma_N^2/t0 - (1-a) sigma_W^2 t0 / a]."""
    p = params
    return (p.sigma_n2 / p.t0 - (1.0 - p.alpha) * p.sigma_w2 * p.t0 / p.alpha) / p.sigma_x2


def bias_t0_zero(params: ModelParams) -> float:
    """Limit of the estimator's offset as the true gain vanishes."""
    return math.sqrt(params.sigma_n2 / params.sigma_x2)


def bias_derivative(params: ModelParams) -> float:
    """d(bias)/d(true gain); vanishes in the deep regime and is exposed only
    as a diagnostic for the neglected MSE-floor factor."""
    p = params
    return -((1.0 - p.alpha) * p.alpha * p.sigma_lam2 * p.t0**2 + p.sigma_n2) \
        / (p.sigma_x2 * p.t0**2)


def mse_lower_bound(params: ModelParams) -> float:
    """Total MSE floor: inverse information plus squared bias."""
    return 1.0 / fisher_asymptotic(params) + bias_asymptotic(params) ** 2


def pilot_bounds(params: ModelParams) -> tuple[float, float]:
    """Estimation-variance floors for ANY scheme in this channel:
    (sigma_N^2 / (n (sigma_X + sigma_W)^2), sigma_N^2 / (n (sigma_X^2 + sigma_W^2)))
    -- the first with a freely designed helper signal, the second with an
    independent one."""
    p = params
    sw = math.sqrt(p.sigma_w2)
    sx = math.sqrt(p.sigma_x2)
    return (p.sigma_n2 / (p.n * (sx + sw) ** 2),
            p.sigma_n2 / (p.n * (p.sigma_x2 + p.sigma_w2)))


@dataclass(frozen=True)
class TheoryReport:
    """All closed-form quantities for one parameter point."""

    fisher_exact: float
    fisher_asymptotic: float
    bias: float
    bias_taylor: tuple[float, float, float, float]
    mse_lower: float
    alpha_opt: float
    alpha_no_bias: float
    alpha_max_fisher: float
    bound1: float
    bound2: float


def make_theory_report(params: ModelParams) -> TheoryReport:
    p = params
    nb = p.sigma_w2 * p.t0**2 / (p.sigma_n2 + p.sigma_w2 * p.t0**2)
    b1, b2 = pilot_bounds(p)
    return TheoryReport(fisher_exact=fisher_exact(p),
                        fisher_asymptotic=fisher_asymptotic(p),
                        bias=bias_asymptotic(p),
                        bias_taylor=bias_taylor(p),
                        mse_lower=mse_lower_bound(p),
                        alpha_opt=alpha_opt(p),
                        alpha_no_bias=nb,
                        alpha_max_fisher=alpha_max_fisher(p),
                        bound1=b1, bound2=b2)


def mc_curvature(params: ModelParams, lattice, trials: int, master_seed: int = 0,
                 h_rel: float = 1e-4, exclude_decision_changes: bool = True
                 ) -> tuple[float, float, int]:
    """Monte-Carlo oracle for the expected curvature of half the objective at
    the true gain, by central second differences with common random numbers
    across the stencil.

    The closed-form information neglects the modulo reduction; trials whose
    decoded lattice point changes anywhere inside the stencil sample exactly
    those modulo events, so they are excluded by default (the concave kinks
    they straddle are not part of the quantity the formula claims).  Returns
    (mean, standard error, kept trials)."""
    t0 = params.t0
    h = h_rel * t0
    vals = []
    for i in range(trials):
        tr = make_trial(params, lattice, trial_seed(master_seed, i))
        ctx = make_context(tr, params, lattice)
        if exclude_decision_changes:
            kp = lattice.quantize(tr.z / (t0 + h) - tr.d)
            km = lattice.quantize(tr.z / (t0 - h) - tr.d)
            if not np.array_equal(kp, km):
                continue
        second = (objective(t0 + h, ctx) - 2.0 * objective(t0, ctx)
                  + objective(t0 - h, ctx)) / (2.0 * h * h)
        vals.append(second)
    vals = np.asarray(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))), len(vals)
