"""Initial (coarse) gain estimators.

Two families:

* ``surrogate_minimizer`` -- the unique positive minimizer of the smooth
  single-minimum surrogate of the objective, found as the single positive
  root of a cubic in t^2 (the sign pattern of the coefficients guarantees
  exactly one sign change, hence at most one positive root).  It is cheap
  and robust but not consistent: as n grows it converges to
  ``surrogate_limit_minimizer``, not to the true gain.
* ``var_estimate`` -- the power-matching estimator of the squared gain,
  (||z||^2/n - sigma_N^2) / (sigma_X^2 + alpha^2 sigma_Lambda^2), truncated
  at zero, together with its approximate sampling density (a Gaussian for
  positive arguments plus a point mass at zero where the truncation bites).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateInputError
from .model import ModelParams
from .specfun import gauss_upper_tail, kummer_1f1
from .target import TargetContext


def _surrogate_cubic_coeffs(ctx: TargetContext) -> tuple[float, float, float, float]:
    """Coefficients (a0, a1, a2, a3) of the stationarity cubic in u = t^2."""
    p = ctx.params
    zz = ctx.znorm2
    n = ctx.n
    one_a2 = (1.0 - p.alpha) ** 2
    a0 = -zz * p.sigma_n2**2
    a1 = -2.0 * one_a2 * p.sigma_lam2 * p.sigma_n2 * zz
    a2 = p.sigma_lam2 * (n * (1.0 + one_a2) * p.sigma_n2 * p.sigma_x2
                         - one_a2**2 * p.sigma_lam2 * zz)
    a3 = n * one_a2**2 * p.sigma_lam2**2 * p.sigma_x2
    return a0, a1, a2, a3


def surrogate_minimizer(ctx: TargetContext) -> float:
    """The unique positive minimizer of the smooth surrogate.

    Newton in u = t^2 seeded at the large-sample limit value, with a
    guaranteed-bracket bisection fallback (the cubic is negative at 0 and
    positive for large u)."""
    if ctx.znorm2 <= 0.0:
        raise DegenerateInputError("surrogate minimizer needs ||z||^2 > 0")
    a0, a1, a2, a3 = _surrogate_cubic_coeffs(ctx)

    def poly(u):
        return ((a3 * u + a2) * u + a1) * u + a0

    def dpoly(u):
        return (3.0 * a3 * u + 2.0 * a2) * u + a1

    p = ctx.params
    seed2 = math.sqrt(p.sigma_n2 * (ctx.znorm2 / ctx.n)
                      / ((1.0 + (1.0 - p.alpha) ** 2) * p.sigma_lam2 * p.sigma_x2))
    u = max(seed2, 1e-12)
    converged = False
    for _ in range(100):
        f = poly(u)
        d = dpoly(u)
        if d <= 0.0:
            break
        step = f / d
        u_new = u - step
        if u_new <= 0.0:
            break
        if abs(step) <= 1e-14 * u_new:
            u = u_new
            converged = True
            break
        u = u_new
    if not converged or poly(u) > abs(a0) * 1e-9:
        lo, hi = 0.0, max(u, seed2, 1.0)
        while poly(hi) <= 0.0:
            hi *= 2.0
            if hi > 1e30:
                raise DegenerateInputError("surrogate cubic has no reachable positive root")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if poly(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
        u = 0.5 * (lo + hi)
    return math.sqrt(u)


def surrogate_limit_minimizer(params: ModelParams) -> float:
    """Large-sample limit of the surrogate minimizer,
    (sigma_N^2 t0^2 / ([1 + (1-alpha)^2] sigma_Lambda^2))^{1/4}."""
    p = params
    return (p.sigma_n2 * p.t0**2 / ((1.0 + (1.0 - p.alpha) ** 2) * p.sigma_lam2)) ** 0.25


@dataclass(frozen=True)
class VarEstimate:
    """Power-matching estimate of the squared gain and its square root."""

    t2_hat: float
    t_hat: float
    clamped: bool


def var_estimate(ctx: TargetContext) -> VarEstimate:
    """max(0, (||z||^2/n - sigma_N^2) / (sigma_X^2 + alpha^2 sigma_Lambda^2))."""
    p = ctx.params
    raw = (ctx.znorm2 / ctx.n - p.sigma_n2) / (p.sigma_x2 + p.alpha**2 * p.sigma_lam2)
    clamped = raw < 0.0
    t2 = max(raw, 0.0)
    return VarEstimate(t2_hat=t2, t_hat=math.sqrt(t2), clamped=clamped)


def var_estimator_crb(params: ModelParams) -> float:
    """Estimation-variance floor of the unbiased squared-gain estimator:
    2 [(sigma_X^2 + a^2 sL^2) t0^2 + sigma_N^2]^2 / (n (sigma_X^2 + a^2 sL^2)^2)."""
    p = params
    s = p.sigma_x2 + p.alpha**2 * p.sigma_lam2
    return 2.0 * (s * p.t0**2 + p.sigma_n2) ** 2 / (p.n * s**2)


_GAMMA_34 = math.gamma(0.75)
_GAMMA_54 = math.gamma(1.25)


def sqrt_gaussian_moments(mu: float, sigma2: float) -> tuple[tuple[float, float], float]:
    """Moments of T = sqrt(T2) for T2 ~ N(mu, sigma2), with negative T2 mapped
    to the imaginary axis.

    Returns ``((re, im), mean_absT2)`` where ``re + i*im`` is E[T] (complex
    before the large-ratio limit) and ``mean_absT2`` is E[|T|^2] =
    exp(-mu^2/(2 s2)) sqrt(2 s2 / pi) + mu erf(mu / sqrt(2 s2)).

    For mu^2 / sigma2 > 1400 the confluent-hypergeometric evaluation would
    overflow; the deep-ratio asymptotic branch is used instead."""
    if sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    q = mu * mu / (2.0 * sigma2)
    if q > 700.0:
        # E[T] -> sqrt(mu) (1 - s2/(8 mu^2) + ...), imaginary part negligible
        mean_re = math.sqrt(mu) * (1.0 - sigma2 / (8.0 * mu * mu))
        return (mean_re, 0.0), mu
    sigma = math.sqrt(sigma2)
    pref = math.exp(-q) / (2.0 ** 0.75 * math.sqrt(math.pi) * math.sqrt(sigma))
    a = sigma * _GAMMA_34 * kummer_1f1(0.75, 0.5, q)
    b = math.sqrt(2.0) * mu * _GAMMA_54 * kummer_1f1(1.25, 1.5, q)
    mean_re = pref * (a + b)
    mean_im = pref * (a - b)
    mean_abs2 = math.exp(-q) * math.sqrt(2.0 * sigma2 / math.pi) \
        + mu * math.erf(mu / math.sqrt(2.0 * sigma2))
    return (mean_re, mean_im), mean_abs2


def var_estimate_pdf(x: float, t0: float, params: ModelParams,
                     which: str = "t2") -> tuple[float, float]:
    """Approximate sampling law of the truncated power-matching estimator.

    Returns ``(density, atom)``: the continuous density at ``x > 0`` and the
    probability mass sitting at zero (where the truncation bites).  ``which``
    selects the squared-gain estimator ("t2") or its square root ("t")."""
    p = params
    s = p.sigma_x2 + p.alpha**2 * p.sigma_lam2
    c = s * t0**2 + p.sigma_n2
    if which == "t2":
        var = 2.0 * c**2 / (p.n * s**2)
        center = t0**2
    elif which == "t":
        var = c**2 / (2.0 * p.n * s**2 * t0**2)
        center = t0
    else:
        raise ValueError(f"which must be 't2' or 't', got {which!r}")
    sd = math.sqrt(var)
    atom = gauss_upper_tail(center / sd)
    if x <= 0.0:
        return 0.0, atom
    dens = math.exp(-0.5 * (x - center) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    return dens, atom
