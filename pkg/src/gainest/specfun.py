"""Self-contained special functions used by the statistical formulas.

Everything here is built on the standard library's ``math`` module only, in
IEEE-754 double precision:

* ``gauss_upper_tail`` / ``gauss_quantile`` -- the standard normal upper tail
  probability and its inverse.  Note that the upper-tail convention is used
  throughout this package: every threshold and feasibility floor is expressed
  as a probability that a standardized statistic *exceeds* a level.
* ``chi2_cdf`` / ``chi2_quantile`` -- chi-square distribution function via the
  regularized lower incomplete gamma (series for small arguments, Lentz
  continued fraction otherwise), accurate up to tens of thousands of degrees
  of freedom.
* ``kummer_1f1`` -- confluent hypergeometric function of the first kind, by
  power series for moderate arguments and by the standard large-argument
  expansion beyond that (negative arguments are first mapped through the
  Kummer transform).
"""

from __future__ import annotations

import functools
import math

_SQRT2 = math.sqrt(2.0)
_MAX_1F1_ARG = 700.0  # exp() overflow guard for the large-argument branch


def gauss_upper_tail(x: float) -> float:
    """P(N(0,1) > x), strictly decreasing in x.

    Relative accuracy is that of ``math.erfc`` (better than 1e-14 for
    |x| <= 8).  Total on the extended reals: +inf -> 0, -inf -> 1.
    """
    return 0.5 * math.erfc(x / _SQRT2)


def _gauss_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# Acklam's rational approximation to the standard normal quantile, used only
# as the seed for Newton refinement against erfc.
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)


def _norm_ppf(p: float) -> float:
    """Phi^{-1}(p) for 0 < p < 1 (Acklam seed + two Newton steps)."""
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_ACKLAM_C[0] * q + _ACKLAM_C[1]) * q + _ACKLAM_C[2]) * q + _ACKLAM_C[3]) * q
               + _ACKLAM_C[4]) * q + _ACKLAM_C[5])
             / ((((_ACKLAM_D[0] * q + _ACKLAM_D[1]) * q + _ACKLAM_D[2]) * q + _ACKLAM_D[3]) * q + 1.0))
    elif p > 1.0 - 0.02425:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_ACKLAM_C[0] * q + _ACKLAM_C[1]) * q + _ACKLAM_C[2]) * q + _ACKLAM_C[3]) * q
                + _ACKLAM_C[4]) * q + _ACKLAM_C[5])
              / ((((_ACKLAM_D[0] * q + _ACKLAM_D[1]) * q + _ACKLAM_D[2]) * q + _ACKLAM_D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_ACKLAM_A[0] * r + _ACKLAM_A[1]) * r + _ACKLAM_A[2]) * r + _ACKLAM_A[3]) * r
               + _ACKLAM_A[4]) * r + _ACKLAM_A[5]) * q
             / (((((_ACKLAM_B[0] * r + _ACKLAM_B[1]) * r + _ACKLAM_B[2]) * r + _ACKLAM_B[3]) * r
                 + _ACKLAM_B[4]) * r + 1.0))
    # Newton refinement on Phi(x) - p = 0; the pdf is well-scaled against the
    # tail because both shrink together.
    for _ in range(2):
        err = 0.5 * math.erfc(-x / _SQRT2) - p
        pdf = _gauss_pdf(x)
        if pdf > 0.0:
            x -= err / pdf
    return x


def gauss_quantile(p: float) -> float:
    """Inverse of ``gauss_upper_tail``: the x with P(N(0,1) > x) = p.

    Raises ValueError unless 0 < p < 1.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"upper-tail probability must lie in (0,1), got {p}")
    return -_norm_ppf(p)


def _gammp_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma by series, for x < a + 1."""
    if x <= 0.0:
        return 0.0
    ap = a
    total = term = 1.0 / a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gammq_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma by Lentz continued fraction, x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_cdf(x: float, k: int) -> float:
    """Distribution function of the chi-square law with k degrees of freedom.

    Equals the regularized lower incomplete gamma P(k/2, x/2); monotone
    nondecreasing in x.  Raises ValueError for x < 0 or k < 1.
    """
    if k < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {k}")
    if x < 0.0:
        raise ValueError(f"chi-square argument must be >= 0, got {x}")
    a = 0.5 * k
    xh = 0.5 * x
    if xh < a + 1.0:
        return min(_gammp_series(a, xh), 1.0)
    return max(1.0 - _gammq_cf(a, xh), 0.0)


def chi2_pdf(x: float, k: int) -> float:
    """Density of the chi-square law with k degrees of freedom."""
    if x < 0.0:
        return 0.0
    if x == 0.0:
        return math.inf if k < 2 else (0.5 if k == 2 else 0.0)
    a = 0.5 * k
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


@functools.lru_cache(maxsize=4096)
def chi2_quantile(p: float, k: int) -> float:
    """Inverse chi-square CDF; chi2_quantile(0, k) == 0.

    Bracketed bisection seeded by the Wilson-Hilferty approximation, followed
    by Newton polishing; the round trip through ``chi2_cdf`` holds to 1e-10.
    Raises ValueError for p outside [0, 1).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0,1), got {p}")
    if p == 0.0:
        return 0.0
    # Wilson-Hilferty seed
    z = -gauss_quantile(p)
    t = 1.0 - 2.0 / (9.0 * k) + z * math.sqrt(2.0 / (9.0 * k))
    guess = k * t * t * t if t > 0.0 else 1e-8 * k
    lo, hi = 0.0, max(guess * 2.0, 1.0)
    while chi2_cdf(hi, k) < p:
        hi *= 2.0
        if hi > 1e18:
            raise ValueError("chi2_quantile failed to bracket")
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, k) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(2):
        f = chi2_cdf(x, k) - p
        d = chi2_pdf(x, k)
        if d > 0.0:
            step = f / d
            if abs(step) < 0.5 * x:
                x -= step
    return x


def _kummer_series(a: float, b: float, x: float) -> float:
    total = term = 1.0
    for n in range(1, 20000):
        term *= (a + n - 1.0) / (b + n - 1.0) * x / n
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total


def _kummer_large_x(a: float, b: float, x: float) -> float:
    """Large positive-argument expansion: 1F1 ~ Gamma(b)/Gamma(a) e^x x^(a-b) 2F0."""
    s = term = 1.0
    prev = math.inf
    for n in range(1, 60):
        term *= (b - a + n - 1.0) * (n - a) / (n * x)
        if abs(term) > prev:
            break  # asymptotic series started diverging; stop at smallest term
        s += term
        prev = abs(term)
        if abs(term) < abs(s) * 1e-16:
            break
    lg = math.lgamma(b) - math.lgamma(a) + x + (a - b) * math.log(x)
    return math.exp(lg) * s * _gamma_sign(b) * _gamma_sign(a)


def _gamma_sign(v: float) -> float:
    """Sign of Gamma(v) for non-pole v (negative on (-1,0), (-3,-2), ...)."""
    if v > 0.0:
        return 1.0
    return -1.0 if math.floor(v) % 2 != 0 else 1.0


def kummer_1f1(a: float, b: float, x: float) -> float:
    """Confluent hypergeometric function of the first kind, 1F1(a; b; x).

    Power series for |x| <= 50 (relative error about 1e-12 there); for larger
    positive arguments the standard large-argument expansion of the series,
    and for large negative arguments the Kummer transform
    ``exp(x) * 1F1(b-a; b; -x)`` first.  |x| > 700 raises OverflowError, and b
    must not be a nonpositive integer.
    """
    if b <= 0.0 and b == math.floor(b):
        raise ValueError(f"1F1 pole: b must not be a nonpositive integer, got b={b}")
    if abs(x) > _MAX_1F1_ARG:
        raise OverflowError(f"1F1 argument out of guarded range: |{x}| > {_MAX_1F1_ARG}")
    if x == 0.0:
        return 1.0
    if x < 0.0:
        # Kummer transform onto a positive argument
        return math.exp(x) * kummer_1f1(b - a, b, -x)
    if x <= 50.0:
        return _kummer_series(a, b, x)
    return _kummer_large_x(a, b, x)
