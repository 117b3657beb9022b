"""Independent reference implementations used as test oracles.

Everything in this module is deliberately written without reusing the package
internals it checks: the convolutional encoder is a bit-by-bit shift
register, the mixture likelihood is an exact closed-form sum, and the 1-D
minimizers are plain golden-section/grid searches.
"""

import math

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f, lo, hi, tol=1e-10, max_iter=200):
    """Golden-section search for the minimum of a unimodal function."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def grid_argmin(f, lo, hi, step):
    """Argmin of f over a uniform grid (f may be vectorized)."""
    ts = np.arange(lo, hi + step, step)
    vals = f(ts)
    return float(ts[np.argmin(vals)])


def encode_conv(info_bits, constraint_length=7, generators=(0o133, 0o171),
                zero_terminated=True):
    """Bit-by-bit rate-1/2 convolutional encoder (shift-register simulation)."""
    g1, g2 = generators
    mem = constraint_length - 1
    reg = [0] * constraint_length  # reg[0] = current input, reg[-1] = oldest
    bits = list(info_bits) + ([0] * mem if zero_terminated else [])
    out = []
    for b in bits:
        reg = [int(b)] + reg[:-1]
        c1 = 0
        c2 = 0
        for i, r in enumerate(reg):
            if (g1 >> i) & 1:
                c1 ^= r
            if (g2 >> i) & 1:
                c2 ^= r
        out += [c1, c2]
    return np.array(out)


def all_coset_codewords(n, constraint_length=7, generators=(0o133, 0o171),
                        zero_terminated=False):
    """Every codeword of the (shortened) code, as an array of 0/1 rows."""
    steps = n // 2
    k = steps - (constraint_length - 1 if zero_terminated else 0)
    words = np.empty((1 << k, n), dtype=np.int64)
    for m in range(1 << k):
        info = [(m >> i) & 1 for i in range(k)]
        words[m] = encode_conv(info, constraint_length, generators, zero_terminated)
    return words


def brute_force_coset_cost(v, codewords, fine_step=1.0):
    """Exact nearest-point squared distance to fine_step*(2Z^n + C) by
    exhaustive search over codewords (per-coordinate shifts are separable)."""
    v = np.atleast_2d(v) / fine_step
    best = np.full(len(v), np.inf)
    arg = np.zeros_like(v)
    for cw in codewords:
        r = v - cw - 2.0 * np.round((v - cw) / 2.0)
        cost = (r * r).sum(axis=1)
        take = cost < best
        best = np.where(take, cost, best)
        arg[take] = (v - r)[take]
    return best * fine_step**2, arg * fine_step


def exact_mixture_neg2_loglik(t, z, d, params, lam_window=None):
    """Exact -2 log f(z | t, d) for the scalar-lattice model with n == 1.

    The likelihood is the lattice mixture sum over centroids lam:
        f = sum_lam P(X in lam + d + cell) * f(z | centroid lam),
    with each term carried out in closed form for the Gaussian host
    restricted to the cell (no flat-host or Gaussian-residual approximation).
    """
    from scipy.special import erf as vec_erf

    sx2, sn2, alpha = params.sigma_x2, params.sigma_n2, params.alpha
    delta = math.sqrt(12.0 * params.sigma_lam2)
    z = float(np.asarray(z).reshape(()))
    d = float(np.asarray(d).reshape(()))
    if lam_window is None:
        lam_window = 50.0 * delta * max(1.0, math.sqrt(sx2) / delta)
    kmax = int(math.ceil(lam_window / delta))
    c = np.arange(-kmax, kmax + 1) * delta + d  # candidate centroids
    vt = t * t * (1.0 - alpha) ** 2 * sx2 + sn2  # variance of z - t*alpha*c
    zc = z - t * alpha * c
    log_dens = -0.5 * zc * zc / vt - 0.5 * math.log(2.0 * math.pi * vt)
    # posterior of the host given zc is N(m, s2), integrated over the cell
    s = math.sqrt(sx2 * sn2 / vt)
    m = t * (1.0 - alpha) * sx2 * zc / vt
    lo = (c - delta / 2.0 - m) / s
    hi = (c + delta / 2.0 - m) / s
    mass = 0.5 * (vec_erf(hi / math.sqrt(2)) - vec_erf(lo / math.sqrt(2)))
    with np.errstate(divide="ignore"):
        terms = log_dens + np.log(mass)
    peak = np.max(terms)
    if not np.isfinite(peak):
        return math.inf
    return -2.0 * (peak + math.log(np.sum(np.exp(terms - peak))))


def wrapped_second_moment(unif_halfwidth, sigma, box_halfwidth, kmax=6):
    """E[wrap(U + N)^2] where U ~ U(-w, w), N ~ N(0, sigma^2), and wrap folds
    into (-b, b].  Exact up to quadrature error; used as the no-approximation
    oracle for the objective's residual-term mean."""
    from scipy import integrate
    from scipy.special import ndtr

    w, b = unif_halfwidth, box_halfwidth

    def pdf(v):
        return (ndtr((v + w) / sigma) - ndtr((v - w) / sigma)) / (2.0 * w)

    total = 0.0
    for k in range(-kmax, kmax + 1):
        lo, hi = (2 * k - 1) * b, (2 * k + 1) * b
        val, err = integrate.quad(lambda v, k=k: (v - 2 * k * b) ** 2 * pdf(v), lo, hi,
                                  epsabs=1e-12, epsrel=1e-10, limit=200)
        assert err < 1e-8
        total += val
    return total


def exact_objective_mean_at_true_gain(params):
    """Quadrature oracle for E[objective(t0)] in the scalar-lattice model,
    keeping the modulo folding that the closed-form moment formula neglects."""
    delta = math.sqrt(12.0 * params.sigma_lam2)
    t0, a = params.t0, params.alpha
    sn = math.sqrt(params.sigma_n2)
    w = t0 * (1.0 - a) * delta / 2.0
    b = t0 * delta / 2.0
    dv = params.sigma_n2 + (1 - a) ** 2 * t0**2 * params.sigma_lam2
    n = params.n
    r2 = wrapped_second_moment(w, sn, b)
    zvar = (params.sigma_x2 + a**2 * params.sigma_lam2) * t0**2 + params.sigma_n2
    return n * r2 / dv + n * math.log(2 * math.pi * dv) + n * zvar / (params.sigma_x2 * t0**2)
