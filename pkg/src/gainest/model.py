"""Model-parameter algebra and the embed/attack simulation pipeline.

The package fixes the embedding power convention ``sigma_W^2 = 1``: the host
variance is then the document-to-watermark ratio (linear), the channel noise
variance is the inverse watermark-to-noise ratio, and the lattice second
moment per dimension is ``1 / alpha^2``.  All derived regime ratios (host to
lattice, self noise to channel noise, total noise to lattice) follow from
those three numbers.

Simulation is fully deterministic given a 64-bit seed: each trial gets its
own counter-based stream (Philox keyed by the seed), and the draw order is
fixed as host, dither, channel noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lattices import ConvCosetLattice, Lattice, ProductLattice, ScalarLattice

# regime thresholds for the asymptotic-branch flags
_HLR_LARGE_DB = 25.0


def _db(x: float) -> float:
    return 10.0 * math.log10(x)


def _lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ModelParams:
    """All scalar model quantities plus the derived regime ratios."""

    n: int
    sigma_x2: float
    sigma_n2: float
    sigma_lam2: float
    alpha: float
    t0: float

    def __post_init__(self):
        if min(self.sigma_x2, self.sigma_n2, self.sigma_lam2) <= 0:
            raise ValueError("all variances must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0,1], got {self.alpha}")
        if not self.t0 > 0 and not math.isnan(self.t0):
            raise ValueError(f"t0 must be positive, got {self.t0}")

    @property
    def sigma_w2(self) -> float:
        """Embedding power alpha^2 * sigma_Lambda^2."""
        return self.alpha**2 * self.sigma_lam2

    @property
    def dwr_db(self) -> float:
        return _db(self.sigma_x2 / self.sigma_w2)

    @property
    def wnr_db(self) -> float:
        return _db(self.sigma_w2 / self.sigma_n2)

    @property
    def hlr_lin(self) -> float:
        return self.sigma_x2 / self.sigma_lam2

    @property
    def hlr_db(self) -> float:
        return _db(self.hlr_lin)

    @property
    def scr_lin(self) -> float:
        return (1.0 - self.alpha) ** 2 * self.sigma_lam2 * self.t0**2 / self.sigma_n2

    @property
    def scr_db(self) -> float:
        return _db(self.scr_lin)

    @property
    def tnlr(self) -> float:
        """Total-noise to lattice ratio (linear)."""
        return ((1.0 - self.alpha) ** 2 * self.t0**2 * self.sigma_lam2 + self.sigma_n2) \
            / (self.t0**2 * self.sigma_lam2)

    @property
    def hlr_large(self) -> bool:
        """Whether the large-host-to-lattice asymptotic branch is allowed."""
        return self.hlr_db >= _HLR_LARGE_DB

    @property
    def tnlr_lt_1(self) -> bool:
        return self.tnlr < 1.0

    def estimator_view(self) -> "ModelParams":
        """A copy with the true gain hidden (NaN); what estimators may see."""
        return replace(self, t0=math.nan)


def derive_params(dwr_db: float, wnr_db: float, alpha: float, t0: float, n: int) -> ModelParams:
    """Build consistent model parameters under the sigma_W^2 = 1 convention."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    if t0 <= 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    return ModelParams(n=n, sigma_x2=_lin(dwr_db), sigma_n2=1.0 / _lin(wnr_db),
                       sigma_lam2=1.0 / alpha**2, alpha=alpha, t0=t0)


def alpha_no_bias(wnr_db: float, t0: float) -> float:
    """The distortion-compensation value nulling the estimator bias,
    sigma_W^2 t0^2 / (sigma_N^2 + sigma_W^2 t0^2) (effective-power form)."""
    if t0 <= 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    w = _lin(wnr_db)
    return w * t0**2 / (1.0 + w * t0**2)


def make_lattice(params: ModelParams, kind: str = "scalar",
                 cache_path: str | None = None) -> Lattice:
    """A lattice of the requested kind scaled to the model's second moment."""
    if kind == "scalar":
        return ScalarLattice(math.sqrt(12.0 * params.sigma_lam2))
    if kind in ("hex", "d4"):
        return ProductLattice(kind).scaled_to(params.sigma_lam2)
    if kind == "convcoset":
        return ConvCosetLattice(params.n).scaled_to(params.sigma_lam2, cache_path=cache_path)
    raise ValueError(f"unknown lattice kind {kind!r}")


@dataclass(frozen=True)
class TrialData:
    """One simulated instance with its seed for provenance."""

    x: np.ndarray
    d: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    z: np.ndarray
    seed: int


def embed(x: np.ndarray, d: np.ndarray, alpha: float, lattice: Lattice) -> np.ndarray:
    """Watermarked signal: move the host a fraction alpha toward the dithered
    lattice centroid, y = x - alpha * ((x - d) mod Lambda)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != d.shape:
        raise ValueError(f"host and dither shapes differ: {x.shape} vs {d.shape}")
    return x - alpha * lattice.mod_reduce(x - d)


def run_channel(y: np.ndarray, t0: float, sigma_n2: float,
                rng: np.random.Generator) -> np.ndarray:
    """Gain attack plus AWGN: z = t0 * y + noise."""
    if t0 <= 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    y = np.asarray(y, dtype=float)
    return t0 * y + rng.normal(0.0, math.sqrt(sigma_n2), y.shape)


def trial_rng(seed: int) -> np.random.Generator:
    """Counter-based stream for one trial."""
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))


def trial_seed(master_seed: int, index: int) -> int:
    """Per-trial seed: master xor trial index (distinct keys give independent
    Philox streams)."""
    return (master_seed ^ index) & (2**64 - 1)


def make_trial(params: ModelParams, lattice: Lattice, seed: int) -> TrialData:
    """Simulate one full instance; bit-for-bit deterministic given the seed."""
    rng = trial_rng(seed)
    n = params.n
    x = rng.normal(0.0, math.sqrt(params.sigma_x2), n)
    d = lattice.dither(n, rng)
    y = embed(x, d, params.alpha, lattice)
    noise = rng.normal(0.0, math.sqrt(params.sigma_n2), n)
    z = params.t0 * y + noise
    return TrialData(x=x, d=d, noise=noise, y=y, z=z, seed=seed)
