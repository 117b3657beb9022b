"""Candidate-set construction over the search interval.

The candidate set must land at least one point inside the objective's main
lobe (the neighborhood of the true gain where the residual is not saturated)
so a local refiner started there finds the global minimum.

Two stepping rules are provided:

* the smooth per-coordinate rule (``lowdim_step``), which constrains the next
  point's hypothetical residual variance to exceed the current one by at most
  ``k1`` times the saturation level -- a geometric progression with a ratio
  fixed by the model variances and ``k1``;
* the saturation-edge rule (``lobe_edges``), which jumps straight to the gain
  where the hypothetical residual variance meets the saturation level --
  appropriate for high-dimensional near-spherical cells, whose saturation is
  abrupt.

``build_candidates`` walks the interval with either the pure geometric rule
or the hybrid rule (saturation jumps with a geometric fallback wherever the
jump does not exist).

``count_nondifferentiable`` counts, exactly, the gains in an interval where
the scalar-lattice residual crosses a cell boundary in some coordinate (the
objective's non-differentiable points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RunawayError
from .intervals import IntervalBounds
from .model import ModelParams

_MAX_POINTS = 1_000_000


@dataclass(frozen=True)
class CandidateSet:
    """Strictly increasing candidate gains over a search interval."""

    points: np.ndarray
    rule: str            # lowdim | hybrid
    k1: float | None
    anchored_at: str     # lower | upper | t1


def _step_ratio(params: ModelParams, k1: float, direction: str) -> float:
    p = params
    denom = p.sigma_x2 + p.sigma_lam2 * (1.0 - k1)
    if denom <= 0.0:
        raise ValueError(
            f"k1={k1} too large: needs k1 < 1 + sigma_X^2/sigma_Lambda^2 "
            f"= {1.0 + p.sigma_x2 / p.sigma_lam2:.3f}")
    root = p.sigma_lam2 * ((1.0 - p.alpha) ** 2 + k1 * (2.0 * p.alpha - 1.0)) \
        + k1 * p.sigma_x2
    if root < 0.0:
        raise ValueError(f"k1={k1} makes the step discriminant negative")
    wing = math.sqrt(p.sigma_lam2) * math.sqrt(root)
    core = p.alpha * p.sigma_lam2 + p.sigma_x2
    if direction == "up":
        return (core + wing) / denom
    if direction == "down":
        return (core - wing) / denom
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def lowdim_step(t: float, params: ModelParams, k1: float, direction: str = "up") -> float:
    """Next candidate from the per-coordinate variance-budget rule; the ratio
    next/t depends only on the model variances, alpha and k1."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if k1 < 0:
        raise ValueError(f"k1 must be nonnegative, got {k1}")
    return t * _step_ratio(params, k1, direction)


def lobe_existence_threshold(params: ModelParams) -> float:
    """The smallest hypothetical gain for which the saturation equation has
    real roots: sqrt(sX^2 sN^2 / (a sL^2 [sX^2 (2-a) + a sL^2]))."""
    p = params
    return math.sqrt(p.sigma_x2 * p.sigma_n2
                     / (p.alpha * p.sigma_lam2
                        * (p.sigma_x2 * (2.0 - p.alpha) + p.alpha * p.sigma_lam2)))


def lobe_edges(t_hyp: float, params: ModelParams) -> tuple[float, float] | None:
    """Gains where the residual variance (with ``t_hyp`` as the true gain)
    meets the saturation level t^2 sigma_Lambda^2; None when no real solution
    exists (the main lobe does not exist at that hypothetical gain)."""
    if t_hyp <= 0:
        raise ValueError(f"t_hyp must be positive, got {t_hyp}")
    p = params
    disc = t_hyp**2 * p.alpha * p.sigma_lam2 \
        * (p.sigma_x2 * (2.0 - p.alpha) + p.alpha * p.sigma_lam2) \
        - p.sigma_n2 * p.sigma_x2
    if disc < 0.0:
        return None
    core = t_hyp * (p.sigma_x2 + p.alpha * p.sigma_lam2)
    wing = math.sqrt(disc)
    return (core - wing) / p.sigma_x2, (core + wing) / p.sigma_x2


def build_candidates(bounds: IntervalBounds, params: ModelParams, rule: str = "hybrid",
                     k1: float = 0.5, jump_to_threshold: bool = False) -> CandidateSet:
    """Walk candidates from the interval's lower edge upward until one falls
    at or beyond the upper edge (the final point may overshoot).

    * ``rule="lowdim"``: pure geometric progression from the variance-budget
      step.
    * ``rule="hybrid"``: saturation-edge jumps where the hypothetical lobe
      exists, with the geometric step as fallback below the existence
      threshold.  ``jump_to_threshold`` replaces the fallback walk by a single
      jump onto the existence threshold.
    """
    if rule not in ("lowdim", "hybrid"):
        raise ValueError(f"unknown sampling rule {rule!r}")
    t = bounds.t_lower
    pts = [t]
    if bounds.collapsed:
        return CandidateSet(points=np.array(pts), rule=rule, k1=k1, anchored_at="lower")
    thresh = lobe_existence_threshold(params) if rule == "hybrid" else math.inf
    while t < bounds.t_upper:
        if rule == "hybrid" and t >= thresh:
            e = lobe_edges(t, params)
            # the discriminant can round below zero right at the threshold
            t = e[1] if e is not None else lowdim_step(t, params, k1, "up")
        elif rule == "hybrid" and jump_to_threshold and thresh <= bounds.t_upper:
            t = thresh
        else:
            t = lowdim_step(t, params, k1, "up")
        pts.append(t)
        if len(pts) > _MAX_POINTS:
            raise RunawayError(
                f"candidate walk exceeded {_MAX_POINTS} points "
                f"(interval [{bounds.t_lower}, {bounds.t_upper}], k1={k1})")
    return CandidateSet(points=np.array(pts), rule=rule, k1=k1, anchored_at="lower")


def count_nondifferentiable(interval: tuple[float, float], z: np.ndarray, d: np.ndarray,
                            delta: float) -> int:
    """Exact count of gains in (a, b) where some coordinate of the
    scalar-lattice residual crosses a cell boundary.

    Crossings for coordinate j sit at t = z_j / (d_j + delta (k + 1/2)) over
    integer k; the count reduces to integer-interval arithmetic."""
    a, b = interval
    if not 0.0 < a < b:
        raise ValueError(f"need 0 < a < b, got ({a}, {b})")
    z = np.asarray(z, dtype=float)
    d = np.asarray(d, dtype=float)
    total = 0
    # t in (a,b) and t = z/c requires c = z/t in (z/b, z/a) for z > 0 (c > 0),
    # or in (z/a, z/b) for z < 0 (c < 0); count integers k with
    # d + delta (k + 1/2) in that open interval
    for zj, dj in zip(z, d):
        if zj == 0.0:
            continue
        lo, hi = (zj / b, zj / a) if zj > 0 else (zj / a, zj / b)
        k_lo = math.floor((lo - dj) / delta - 0.5)
        k_hi = math.ceil((hi - dj) / delta - 0.5)
        for k in range(k_lo, k_hi + 1):
            c = dj + delta * (k + 0.5)
            if lo < c < hi:
                total += 1
    return total
