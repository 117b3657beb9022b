"""Quantizer abstraction over the embedding lattice.

Three concrete kinds are provided:

* :class:`ScalarLattice` -- the cubic lattice ``delta * Z^n`` (any n).
* :class:`ProductLattice` -- the Cartesian power of a named low-dimensional
  lattice (hexagonal in 2-D, checkerboard D4 in 4-D), scaled by ``delta``.
* :class:`ConvCosetLattice` -- a mod-2 Construction-A lattice
  ``fine_step * (2 Z^n + C)`` built from a rate-1/2 binary convolutional code
  (default: constraint length 7, octal generators 133/171), quantized exactly
  by a Viterbi pass with squared-error branch metrics.

All quantizers expose the same small surface: ``quantize`` (exact nearest
lattice point), ``mod_reduce`` (residual after removing the nearest point of
the lattice scaled by ``t``), ``dither`` (a uniform sample over the
fundamental cell, realized as ``mod_reduce`` of a uniform draw over one period
box -- an exact construction since the reduction is a measure-preserving
piecewise translation), and ``stats`` (per-dimension second moment, cell
volume, shaping figures).

Scalar and product second moments are closed-form.  The convolutional-coset
second moment is a cached Monte-Carlo estimate (fixed seed, one million
dither samples) stored in a small sidecar text file so repeated runs are
reproducible and cheap.
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_STATS_FILE_DEFAULT = "lattice-stats.v1"
_STATS_SEED = 0x11CE5CA1E  # fixed seed for the cached Monte-Carlo estimates
_STATS_SAMPLES = 1_000_000
_memo_lock = threading.Lock()
_memo: dict[tuple, tuple[float, float]] = {}


@dataclass(frozen=True)
class LatticeStats:
    """Per-dimension second moment and shaping figures of a lattice.

    ``shaping_gain_db`` compares the cell's second moment against a cube of
    equal volume, in dB; ``shaping_ratio`` is the same figure as a plain
    ratio.  ``mc_stderr`` is zero for closed-form entries.
    """

    second_moment: float
    cell_volume_per_dim: float
    shaping_gain_db: float
    n: int
    shaping_ratio: float
    mc_stderr: float = 0.0


def _as_batch(v: np.ndarray) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v[None, :], True
    if v.ndim == 2:
        return v, False
    raise ValueError(f"expected a vector or a batch of vectors, got shape {v.shape}")


class ScalarLattice:
    """The cubic lattice delta * Z^n; works for any dimension."""

    kind = "scalar"

    def __init__(self, delta: float):
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = float(delta)
        self.period = float(delta)  # per-coordinate period box for dithering

    def quantize(self, v: np.ndarray) -> np.ndarray:
        # np.round is round-half-to-even, the tie rule fixed for this package
        v = np.asarray(v, dtype=float)
        return self.delta * np.round(v / self.delta)

    def mod_reduce(self, v: np.ndarray, scale: float = 1.0) -> np.ndarray:
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        v = np.asarray(v, dtype=float)
        return v - scale * self.quantize(v / scale)

    def dither(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mod_reduce(rng.uniform(0.0, self.period, n))

    def stats(self, n: int) -> LatticeStats:
        s2 = self.delta**2 / 12.0
        return LatticeStats(second_moment=s2, cell_volume_per_dim=self.delta,
                            shaping_gain_db=0.0, n=n, shaping_ratio=1.0)

    def scaled_to(self, second_moment: float) -> "ScalarLattice":
        """A copy whose per-dimension second moment equals the target."""
        return ScalarLattice(math.sqrt(12.0 * second_moment))


_normalization_checked: set[str] = set()


# Named low-dimensional bases with exact normalized second moments (NSM).
# NSM = sigma^2 / V^(2/m); the tabulated constants are the standard values
# for the hexagonal lattice and the D4 checkerboard lattice.
_BASES = {
    "hex": {
        "m": 2,
        "gen": np.array([[1.0, 0.0], [0.5, 0.5 * math.sqrt(3.0)]]),
        "nsm": 5.0 / (36.0 * math.sqrt(3.0)),
    },
    "d4": {
        "m": 4,
        "gen": np.array([[1.0, 1.0, 0.0, 0.0],
                         [0.0, 1.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0, 1.0],
                         [0.0, 0.0, 1.0, -1.0]]),
        "nsm": 0.0766032,
    },
}


class ProductLattice:
    """Cartesian power of a named low-dimensional lattice, scaled by delta.

    The base generator is normalized (checked at construction by a coarse
    per-axis grid search) so that the covering/packing radius ratio is not
    improved by rescaling individual axes; this rules out badly anisotropic
    cells for which the package's statistics would not apply.
    """

    kind = "product"

    def __init__(self, base: str = "hex", delta: float = 1.0, validate: bool = True):
        if base not in _BASES:
            raise ValueError(f"unknown base lattice {base!r}; supported: {sorted(_BASES)}")
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        spec = _BASES[base]
        self.base = base
        self.delta = float(delta)
        self.m = spec["m"]
        self.gen = spec["gen"] * self.delta
        self.gen_inv = np.linalg.inv(self.gen)
        self.nsm = spec["nsm"]
        self.volume_block = abs(np.linalg.det(self.gen))
        self.period = None  # dithering uses the block-level period box
        # offsets for exact nearest-point search around the rounded basis coords
        rng = [-2, -1, 0, 1, 2]
        self._offsets = np.array(np.meshgrid(*([rng] * self.m), indexing="ij")).reshape(self.m, -1).T
        if validate:
            self._check_axis_normalization()

    # -- block-level operations (arrays shaped (..., m)) --

    def _quantize_blocks(self, vb: np.ndarray) -> np.ndarray:
        coords = np.round(vb @ self.gen_inv)
        cand = (coords[..., None, :] + self._offsets) @ self.gen  # (..., 3^m, m)
        d2 = ((cand - vb[..., None, :]) ** 2).sum(axis=-1)
        best = np.argmin(d2, axis=-1)
        return np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]

    def quantize(self, v: np.ndarray) -> np.ndarray:
        vb, single = _as_batch(v)
        B, n = vb.shape
        if n % self.m:
            raise ValueError(f"dimension {n} is not a multiple of the block size {self.m}")
        blocks = vb.reshape(B, n // self.m, self.m)
        out = self._quantize_blocks(blocks).reshape(B, n)
        return out[0] if single else out

    def mod_reduce(self, v: np.ndarray, scale: float = 1.0) -> np.ndarray:
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        v = np.asarray(v, dtype=float)
        return v - scale * self.quantize(v / scale)

    def dither(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n % self.m:
            raise ValueError(f"dimension {n} is not a multiple of the block size {self.m}")
        # uniform over the fundamental parallelepiped, then reduce
        u = rng.uniform(0.0, 1.0, (n // self.m, self.m)) @ self.gen
        return self.mod_reduce(u.reshape(n))

    def stats(self, n: int) -> LatticeStats:
        v_per_dim = self.volume_block ** (1.0 / self.m)
        s2 = self.nsm * v_per_dim**2
        ratio = (1.0 / 12.0) / self.nsm
        return LatticeStats(second_moment=s2, cell_volume_per_dim=v_per_dim,
                            shaping_gain_db=10.0 * math.log10(ratio), n=n,
                            shaping_ratio=ratio)

    def scaled_to(self, second_moment: float) -> "ProductLattice":
        cur = self.stats(self.m).second_moment
        return ProductLattice(self.base, self.delta * math.sqrt(second_moment / cur),
                              validate=False)

    # -- normalization check --

    def _cover_pack_ratio(self, gen: np.ndarray, probes: np.ndarray) -> float:
        gen_inv = np.linalg.inv(gen)
        # packing radius: half the shortest nonzero vector over a small window
        win = [-2, -1, 0, 1, 2]
        coords = np.array(np.meshgrid(*([win] * self.m), indexing="ij")).reshape(self.m, -1).T
        pts = coords @ gen
        norms = np.linalg.norm(pts, axis=1)
        pack = norms[norms > 1e-12].min() / 2.0
        # covering radius estimate: max distance from probe points to the lattice
        p = probes @ gen
        coords = np.round(p @ gen_inv)
        cand = (coords[:, None, :] + self._offsets) @ gen
        d = np.sqrt(((cand - p[:, None, :]) ** 2).sum(axis=-1)).min(axis=1)
        return d.max() / pack

    def _check_axis_normalization(self):
        # one fine-grid check per base (the ratio is scale invariant)
        if self.base in _normalization_checked:
            return
        pts_per_axis = 161 if self.m == 2 else 7
        axes = [np.linspace(0.0, 1.0, pts_per_axis)] * self.m
        probes = np.array(np.meshgrid(*axes, indexing="ij")).reshape(self.m, -1).T
        base_ratio = self._cover_pack_ratio(self.gen, probes)
        for axis in range(self.m):
            for s in (0.8, 0.9, 1.1, 1.25):
                gen = self.gen.copy()
                gen[:, axis] *= s
                if self._cover_pack_ratio(gen, probes) < base_ratio * 0.99:
                    raise ValueError(
                        f"base {self.base!r} is not covering/packing normalized: axis "
                        f"{axis} rescaled by {s} improves the ratio")
        _normalization_checked.add(self.base)


class ConvCosetLattice:
    """Construction-A coset lattice fine_step * (2 Z^n + C) from a rate-1/2
    binary convolutional code, quantized by exact Viterbi minimization.

    The trellis is zero-terminated by default (start and end in the all-zero
    state; the last ``memory`` input bits are forced to zero), which keeps the
    point set a genuine lattice at finite block length.  ``zero_terminated=
    False`` leaves the final state free; that variant is used by the
    exhaustive-search cross-checks where the full 2^(n/2) codeword set is
    wanted at short lengths.

    Viterbi path ties are broken toward the lexicographically smaller
    survivor (the predecessor in the lower half of the state set), making the
    quantizer deterministic across platforms.
    """

    kind = "convcoset"

    def __init__(self, n: int, fine_step: float = 1.0, constraint_length: int = 7,
                 generators: tuple[int, int] = (0o133, 0o171), zero_terminated: bool = True):
        if len(generators) != 2:
            raise ValueError("a rate-1/2 code needs exactly two generators")
        if constraint_length < 2:
            raise ValueError("constraint length must be at least 2")
        if max(generators) >= (1 << constraint_length):
            raise ValueError("generator polynomial wider than the constraint length")
        if n < 2 * constraint_length or n % 2:
            raise ValueError(
                f"block length must be an even n >= {2*constraint_length}, got {n}")
        if fine_step <= 0:
            raise ValueError(f"fine_step must be positive, got {fine_step}")
        self.n = int(n)
        self.fine_step = float(fine_step)
        self.constraint_length = int(constraint_length)
        self.generators = (int(generators[0]), int(generators[1]))
        self.zero_terminated = bool(zero_terminated)
        self.memory = constraint_length - 1
        self.nstates = 1 << self.memory
        self.steps = n // 2
        self.info_bits = self.steps - (self.memory if zero_terminated else 0)
        if self.info_bits < 1:
            raise ValueError("block too short to carry information after termination")
        self.period = 2.0 * self.fine_step
        self._build_tables()

    def _encode_step(self, state: int, bit: int) -> tuple[int, int]:
        window = ((state << 1) | bit) & ((1 << self.constraint_length) - 1)
        g1, g2 = self.generators
        c1 = bin(window & g1).count("1") & 1
        c2 = bin(window & g2).count("1") & 1
        return window & (self.nstates - 1), (c1 << 1) | c2

    def _build_tables(self):
        ns = self.nstates
        half = ns // 2
        # butterfly predecessors of next-state t: (t >> 1) and (t >> 1) + ns/2,
        # both via input bit t & 1
        self._idx0 = np.arange(ns) >> 1
        self._idx1 = self._idx0 + half
        bits = np.arange(ns) & 1
        self._sym0 = np.array([self._encode_step(int(self._idx0[t]), int(bits[t]))[1]
                               for t in range(ns)])
        self._sym1 = np.array([self._encode_step(int(self._idx1[t]), int(bits[t]))[1]
                               for t in range(ns)])
        self._odd_next = bits == 1

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Coded bit sequence (length n) for a block of information bits."""
        bits = list(np.asarray(info_bits, dtype=int))
        if len(bits) != self.info_bits:
            raise ValueError(f"expected {self.info_bits} information bits, got {len(bits)}")
        if self.zero_terminated:
            bits = bits + [0] * self.memory
        state = 0
        out = np.empty(self.n, dtype=np.int64)
        for t, b in enumerate(bits):
            state, sym = self._encode_step(state, int(b))
            out[2 * t] = (sym >> 1) & 1
            out[2 * t + 1] = sym & 1
        if self.zero_terminated and state != 0:
            raise AssertionError("termination failed")
        return out

    def quantize(self, v: np.ndarray) -> np.ndarray:
        vb, single = _as_batch(v)
        B, n = vb.shape
        if n != self.n:
            raise ValueError(f"lattice is bound to n={self.n}, got vectors of length {n}")
        u = vb / self.fine_step
        out = self._viterbi(u) * self.fine_step
        return out[0] if single else out

    def _viterbi(self, u: np.ndarray) -> np.ndarray:
        """Exact nearest point of 2 Z^n + C to each row of u."""
        B, n = u.shape
        steps = self.steps
        ns = self.nstates
        half = ns // 2
        INF = 1e300
        r0 = u - 2.0 * np.round(u / 2.0)
        u1 = u - 1.0
        r1 = u1 - 2.0 * np.round(u1 / 2.0)
        c0 = r0 * r0
        c1 = r1 * r1
        pm = np.full((B, ns), INF)
        pm[:, 0] = 0.0
        bp = np.empty((steps, B, ns), dtype=bool)
        pc = np.empty((B, 4))
        term_from = steps - self.memory
        for t in range(steps):
            e, o = 2 * t, 2 * t + 1
            np.add(c0[:, e], c0[:, o], out=pc[:, 0])
            np.add(c0[:, e], c1[:, o], out=pc[:, 1])
            np.add(c1[:, e], c0[:, o], out=pc[:, 2])
            np.add(c1[:, e], c1[:, o], out=pc[:, 3])
            a0 = np.repeat(pm[:, :half], 2, axis=1)
            a0 += pc[:, self._sym0]
            a1 = np.repeat(pm[:, half:], 2, axis=1)
            a1 += pc[:, self._sym1]
            ch = a1 < a0  # ties keep the lower-half (lexicographically smaller) survivor
            pm = np.where(ch, a1, a0)
            if self.zero_terminated and t >= term_from:
                pm[:, self._odd_next] = INF
            bp[t] = ch
        if self.zero_terminated:
            state = np.zeros(B, dtype=np.int64)
        else:
            state = np.argmin(pm, axis=1)
        rows = np.arange(B)
        out = np.empty((B, n))
        for t in range(steps - 1, -1, -1):
            ch = bp[t, rows, state]
            sym = np.where(ch, self._sym1[state], self._sym0[state])
            b1 = (sym >> 1) & 1
            b2 = sym & 1
            e, o = 2 * t, 2 * t + 1
            out[:, e] = np.where(b1 == 1, u[:, e] - r1[:, e], u[:, e] - r0[:, e])
            out[:, o] = np.where(b2 == 1, u[:, o] - r1[:, o], u[:, o] - r0[:, o])
            state = np.where(ch, self._idx1[state], self._idx0[state])
        return out

    def mod_reduce(self, v: np.ndarray, scale: float = 1.0) -> np.ndarray:
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        v = np.asarray(v, dtype=float)
        return v - scale * self.quantize(v / scale)

    def dither(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n != self.n:
            raise ValueError(f"lattice is bound to n={self.n}")
        return self.mod_reduce(rng.uniform(0.0, self.period, n))

    # -- cached Monte-Carlo statistics --

    def _cache_key(self, fine_step: float) -> tuple:
        return ("convcoset", self.constraint_length, self.generators,
                self.zero_terminated, self.n, fine_step)

    def _params_str(self, fine_step: float) -> str:
        return (f"cl{self.constraint_length}-g{self.generators[0]:o}-{self.generators[1]:o}"
                f"-zt{int(self.zero_terminated)}-fs{fine_step!r}")

    def _mc_unit_second_moment(self, threads: int) -> tuple[float, float]:
        """Second moment per dimension at fine_step=1 by Monte Carlo."""
        # keep the per-chunk backpointer array around 128 MB
        chunk = min(40_000, max(500, int(128e6 / (self.steps * self.nstates))))
        nchunks = max(1, _STATS_SAMPLES // chunk)
        unit = ConvCosetLattice(self.n, 1.0, self.constraint_length, self.generators,
                                self.zero_terminated)

        def one(i):
            g = np.random.default_rng(np.random.Philox(key=_STATS_SEED + i))
            v = g.uniform(0.0, 2.0, (chunk, self.n))
            dith = v - unit._viterbi(v)
            s2 = (dith * dith).mean(axis=1)
            return s2.sum(), (s2 * s2).sum(), len(s2)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(one, range(nchunks)))
        else:
            parts = [one(i) for i in range(nchunks)]
        tot = sum(p[0] for p in parts)
        tot2 = sum(p[1] for p in parts)
        m = sum(p[2] for p in parts)
        mean = tot / m
        stderr = math.sqrt(max(tot2 / m - mean * mean, 0.0) / m)
        return mean, stderr

    def stats(self, n: int | None = None, cache_path: str | None = None,
              threads: int | None = None) -> LatticeStats:
        if n is not None and n != self.n:
            raise ValueError(f"lattice is bound to n={self.n}")
        if cache_path is None:
            cache_path = os.environ.get("GAIN_EST_CACHE", _STATS_FILE_DEFAULT)
        if threads is None:
            threads = min(2, os.cpu_count() or 1)
        key = self._cache_key(self.fine_step)
        with _memo_lock:
            hit = _memo.get(key)
        if hit is None:
            hit = self._read_cache(cache_path, self.fine_step)
        if hit is None:
            unit_key = self._cache_key(1.0)
            with _memo_lock:
                unit = _memo.get(unit_key)
            if unit is None:
                unit = self._read_cache(cache_path, 1.0)
            if unit is None:
                unit = self._mc_unit_second_moment(threads)
                self._write_cache(cache_path, 1.0, *unit)
                with _memo_lock:
                    _memo[unit_key] = unit
            scale = self.fine_step**2
            hit = (unit[0] * scale, unit[1] * scale)
            if self.fine_step != 1.0:
                self._write_cache(cache_path, self.fine_step, *hit)
        with _memo_lock:
            _memo[key] = hit
        s2, stderr = hit
        v_per_dim = self.fine_step * 2.0 ** ((self.n - self.info_bits) / self.n)
        ratio = v_per_dim**2 / (12.0 * s2)
        return LatticeStats(second_moment=s2, cell_volume_per_dim=v_per_dim,
                            shaping_gain_db=10.0 * math.log10(ratio), n=self.n,
                            shaping_ratio=ratio, mc_stderr=stderr)

    def _read_cache(self, path: str, fine_step: float) -> tuple[float, float] | None:
        want = ("convcoset", self._params_str(fine_step), str(self.n))
        try:
            with open(path, "r", encoding="ascii") as fh:
                for line in fh:
                    parts = line.strip().split(",")
                    if len(parts) == 6 and tuple(parts[:3]) == want:
                        return float(parts[3]), float(parts[4])
        except FileNotFoundError:
            return None
        return None

    def _write_cache(self, path: str, fine_step: float, sigma2: float, stderr: float):
        line = (f"convcoset,{self._params_str(fine_step)},{self.n},"
                f"{float(sigma2)!r},{float(stderr)!r},{_STATS_SEED}\n")
        try:
            with open(path, "a", encoding="ascii") as fh:
                fh.write(line)
        except OSError:
            pass  # cache is an optimization; never fail the computation

    def scaled_to(self, second_moment: float, cache_path: str | None = None) -> "ConvCosetLattice":
        """A copy rescaled so its per-dimension second moment equals the target."""
        unit = ConvCosetLattice(self.n, 1.0, self.constraint_length, self.generators,
                                self.zero_terminated)
        s2_unit = unit.stats(cache_path=cache_path).second_moment
        return ConvCosetLattice(self.n, math.sqrt(second_moment / s2_unit),
                                self.constraint_length, self.generators,
                                self.zero_terminated)


Lattice = ScalarLattice | ProductLattice | ConvCosetLattice


def quantize(v: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Nearest lattice point (free-function form of ``lattice.quantize``)."""
    return lattice.quantize(v)


def mod_reduce(v: np.ndarray, scale: float, lattice: Lattice) -> np.ndarray:
    """Residual of v modulo the lattice scaled by ``scale``."""
    return lattice.mod_reduce(v, scale)


def dither_sample(lattice: Lattice, n: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform sample over the fundamental cell."""
    return lattice.dither(n, rng)


def lattice_stats(lattice: Lattice, n: int | None = None) -> LatticeStats:
    """Second moment, cell volume and shaping figures for the lattice."""
    if isinstance(lattice, ConvCosetLattice):
        return lattice.stats(n)
    if n is None:
        raise ValueError("n is required for lattices not bound to a block length")
    return lattice.stats(n)
