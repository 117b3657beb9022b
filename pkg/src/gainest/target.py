"""The estimation objective and its statistical characterization.

``objective`` is the negative log-likelihood shape actually minimized:

    objective(t, z) = ||(z - t d) mod (t Lambda)||^2 / (sigma_N^2 + (1-a)^2 t^2 sL^2)
                    + n log(2 pi (sigma_N^2 + (1-a)^2 t^2 sL^2))
                    + ||z||^2 / (sigma_X^2 t^2)

Its companions split or simplify that shape: ``envelope`` keeps the two cheap
terms (a lower bound, since the residual term is nonnegative),
``residual_term`` is the expensive modulo term alone, ``log_term`` drops the
host term from the envelope, and ``surrogate`` replaces the residual by its
saturated mean so the result has a single minimum in t.

``objective_moments`` gives the Gaussian mean/variance characterization of
the objective at the hypothesized true gain and far away from it, for both
the per-coordinate (scalar) and high-dimensional-good-lattice regimes;
``objective_asymptote`` gives the large-sample deterministic profiles near
and far from the true gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattices import Lattice
from .model import ModelParams, TrialData


@dataclass(frozen=True)
class TargetContext:
    """Everything an estimator may look at: one observation and the public
    model parameters (the true gain is hidden in ``params``)."""

    z: np.ndarray
    d: np.ndarray
    params: ModelParams
    lattice: Lattice
    znorm2: float

    @property
    def n(self) -> int:
        return self.params.n


def make_context(trial: TrialData, params: ModelParams, lattice: Lattice) -> TargetContext:
    """Estimator-visible context for a simulated trial."""
    z = np.asarray(trial.z, dtype=float)
    return TargetContext(z=z, d=np.asarray(trial.d, dtype=float),
                         params=params.estimator_view(), lattice=lattice,
                         znorm2=float(z @ z))


def context_from_observation(z: np.ndarray, d: np.ndarray, params: ModelParams,
                             lattice: Lattice) -> TargetContext:
    z = np.asarray(z, dtype=float)
    return TargetContext(z=z, d=np.asarray(d, dtype=float),
                         params=params.estimator_view(), lattice=lattice,
                         znorm2=float(z @ z))


def _noise_var(t, params: ModelParams):
    """sigma_N^2 + (1-alpha)^2 t^2 sigma_Lambda^2, the residual's variance."""
    return params.sigma_n2 + (1.0 - params.alpha) ** 2 * np.square(t) * params.sigma_lam2


def residual_term(t, ctx: TargetContext):
    """||(z - t d) mod (t Lambda)||^2 / noise_var(t); vectorized over t."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    v = ctx.z[None, :] - ts[:, None] * ctx.d[None, :]
    u = v / ts[:, None]
    r = v - ts[:, None] * ctx.lattice.quantize(u)
    out = (r * r).sum(axis=1) / _noise_var(ts, ctx.params)
    return out if np.ndim(t) else float(out[0])


def envelope(t, ctx: TargetContext):
    """The two cheap terms: n log(2 pi noise_var(t)) + ||z||^2/(sigma_X^2 t^2).

    A lower envelope of the objective, O(1) to evaluate."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    p = ctx.params
    out = ctx.n * np.log(2.0 * math.pi * _noise_var(ts, p)) + ctx.znorm2 / (p.sigma_x2 * ts**2)
    return out if np.ndim(t) else float(out)


def log_term(t, ctx: TargetContext):
    """Envelope without the host term (used by the closed-form upper bound)."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    out = ctx.n * np.log(2.0 * math.pi * _noise_var(ts, ctx.params))
    return out if np.ndim(t) else float(out)


def objective(t, ctx: TargetContext):
    """The full target: residual_term + envelope; vectorized over t."""
    return residual_term(t, ctx) + envelope(t, ctx)


def surrogate(t, ctx: TargetContext):
    """Single-minimum approximation: residual term replaced by its uniform-
    regime mean n t^2 sigma_Lambda^2 / noise_var(t)."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    p = ctx.params
    out = ctx.n * ts**2 * p.sigma_lam2 / _noise_var(ts, p) + envelope(t, ctx)
    return out if np.ndim(t) else float(out)


@dataclass(frozen=True)
class LobeStats:
    """Gaussian mean/variance model for the objective at one gain value."""

    mean: float
    variance: float
    regime: str      # at_t0_scalar | at_t0_goodlattice | far_scalar | far_goodlattice
    dof_model: str   # chi2_n | chi2_2n | gaussian


_AT_REGIMES = ("at_t0_scalar", "at_t0_goodlattice")
_FAR_REGIMES = ("far_scalar", "far_goodlattice")


def objective_moments(t: float, params: ModelParams, regime: str, *,
                      t0_hypothesis: float | None = None,
                      znorm2: float | None = None) -> LobeStats:
    """Mean/variance of the objective under the regime's Gaussian model.

    ``at_t0_*`` regimes characterize the objective at the true gain; the gain
    plugged into the closed forms is ``t0_hypothesis`` when given (the tested
    point plays the role of the true gain) and ``params.t0`` otherwise.

    ``far_*`` regimes characterize points away from the true gain.  When
    ``znorm2`` is given, the host term is treated as deterministic (its
    observed value, no true gain needed); otherwise the true-gain-dependent
    characterization is used and contributes its own variance.
    """
    p = params
    n, a, sl2, sx2, sn2 = p.n, p.alpha, p.sigma_lam2, p.sigma_x2, p.sigma_n2
    delta2 = 12.0 * sl2
    if regime in _AT_REGIMES:
        t0 = t0_hypothesis if t0_hypothesis is not None else p.t0
        dv = sn2 + (1 - a) ** 2 * t0**2 * sl2
        mean = n + n * math.log(2 * math.pi * dv) \
            + n * ((sx2 + a**2 * sl2) * t0**2 + sn2) / (sx2 * t0**2)
        if regime == "at_t0_scalar":
            zvar = t0**2 * sx2 + sn2
            num1 = ((1 - a) ** 4 * t0**4 * delta2**2 / 180.0 + 2 * sn2**2
                    + (1 - a) ** 2 * t0**2 * delta2 * sn2 / 3.0)
            num2 = (a**4 * t0**4 * delta2**2 / 180.0 + 2 * zvar**2
                    + a**2 * t0**2 * delta2 * zvar / 3.0)
            var = n * (num1 / dv**2 + num2 / (sx2**2 * t0**4))
        else:
            var = n * (2.0 + 2.0 * (sx2 * t0**2 + a**2 * t0**2 * sl2 + sn2) ** 2
                       / (sx2**2 * t0**4))
        return LobeStats(mean=mean, variance=var, regime=regime, dof_model="chi2_2n")
    if regime not in _FAR_REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    dv = sn2 + (1 - a) ** 2 * t**2 * sl2
    base_mean = n * t**2 * sl2 / dv + n * math.log(2 * math.pi * dv)
    if regime == "far_scalar":
        var1 = n * 144.0 * t**4 * sl2**2 / 180.0 / dv**2
    else:
        var1 = 2.0 * n * t**4 * sl2**2 / dv**2
    if znorm2 is not None:
        mean = base_mean + znorm2 / (sx2 * t**2)
        var = var1
    else:
        t0 = t0_hypothesis if t0_hypothesis is not None else p.t0
        zvar = (sx2 + a**2 * sl2) * t0**2 + sn2
        mean = base_mean + n * zvar / (sx2 * t**2)
        var = var1 + 2.0 * n * zvar**2 / (sx2**2 * t**4)
    return LobeStats(mean=mean, variance=var, regime=regime, dof_model="gaussian")


def objective_asymptote(t: float, params: ModelParams, near: bool) -> float:
    """Large-sample deterministic value of the objective.

    ``near=True``: 2n + n (t0-t)^2 sigma_X^2 / noise_var(t) + n log(2 pi noise_var(t)).
    ``near=False``: n t^2 sL^2 / noise_var(t) + n log(2 pi noise_var(t)) + n t0^2/t^2.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    p = params
    n = p.n
    dv = p.sigma_n2 + (1 - p.alpha) ** 2 * t**2 * p.sigma_lam2
    if near:
        return 2.0 * n + n * (p.t0 - t) ** 2 * p.sigma_x2 / dv + n * math.log(2 * math.pi * dv)
    return (n * t**2 * p.sigma_lam2 / dv + n * math.log(2 * math.pi * dv)
            + n * p.t0**2 / t**2)


def uniform_regime_gap(t: float, params: ModelParams, k_unif: float) -> float:
    """(t0-t)^2 sigma_X^2 - K_unif t^2 sigma_Lambda^2; nonnegative where the
    saturated (uniform residual) approximation is trustworthy."""
    return (params.t0 - t) ** 2 * params.sigma_x2 - k_unif * t**2 * params.sigma_lam2
