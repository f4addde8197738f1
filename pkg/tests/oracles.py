"""Independent reference computations used by the tests.

Nothing here imports the solvers under test; only scipy and numpy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm


def quad_c_one_sided(alpha, gamma, omega):
    """``c(omega)`` by adaptive quadrature over ``Z2~ ~ N(0, omega)``.

    Uses ``Z1 | Z2~ = s ~ N(s, 1 - omega)``.
    """
    zs = norm.ppf(1 - alpha + gamma)
    sd_cond = math.sqrt(1 - omega)
    sd = math.sqrt(omega)

    def tail(c):
        def integrand(s):
            return norm.sf((min(zs, s + c) - s) / sd_cond) * norm.pdf(s, scale=sd)

        kink = zs - c  # integrand changes form here
        lo, hi = -12 * sd, 12 * sd
        pts = [p for p in (kink,) if lo < p < hi]
        val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-13, epsrel=1e-11, limit=400)
        return val - alpha

    return optimize.brentq(tail, 0.0, norm.ppf(1 - gamma), xtol=1e-10)


def origin_cu_lower(alpha, gamma):
    """Closed form of the two-sided lower bound when ``Z3~ = 0``."""
    t = norm.ppf(1 - (alpha - gamma) / 2)
    return -norm.ppf(norm.cdf(t) - (1 - alpha))


def brute_force_select(omega, sign):
    """Best sign-feasible subset by exhaustive search with plain inverses.

    Returns ``(indices, objective)`` with 1-based indices.  Ties within 1e-12
    go to the smaller, then lexicographically smaller, subset.
    """
    a = np.asarray(omega, dtype=float)
    k = a.shape[0] - 1
    candidates = [((), 0.0)]
    for mask in range(1, 2**k):
        sub = tuple(i for i in range(k) if mask >> i & 1)
        block = a[1:, 1:][np.ix_(sub, sub)]
        if np.linalg.eigvalsh(block).min() < 1e-10:
            continue
        w = a[0, 1:][list(sub)] @ np.linalg.inv(block)
        if np.all(sign * w >= -1e-12):
            candidates.append((tuple(i + 1 for i in sub), float(w @ a[1:, 0][list(sub)])))
    best = max(c[1] for c in candidates)
    near = [c for c in candidates if c[1] >= best - 1e-12]
    near.sort(key=lambda c: (len(c[0]), c[0]))
    return near[0]


def direct_tilde_omega(omega, s1, s2):
    """``(w12, w13, w23)`` by explicit matrix products with 1-based subsets."""
    a = np.asarray(omega, dtype=float)
    b, d = a[0, 1:], a[1:, 1:]
    p1 = [i - 1 for i in s1]
    p2 = [i - 1 for i in s2]
    w12 = w13 = w23 = 0.0
    if p1:
        w12 = b[p1] @ np.linalg.inv(d[np.ix_(p1, p1)]) @ b[p1]
    if p2:
        w13 = b[p2] @ np.linalg.inv(d[np.ix_(p2, p2)]) @ b[p2]
    if p1 and p2:
        w23 = b[p1] @ np.linalg.inv(d[np.ix_(p1, p1)]) @ d[np.ix_(p1, p2)] @ np.linalg.inv(d[np.ix_(p2, p2)]) @ b[p2]
    return w12, w13, w23


def naive_poly(coeffs, point):
    """Sum of ``coef * prod(x_d ** e_d)`` in plain Python floats."""
    total = 0.0
    for exps, c in coeffs.items():
        term = c
        for x, e in zip(point, exps):
            term *= x**e
        total += term
    return total


def random_corr(rng, dim):
    """Random positive-definite correlation matrix."""
    a = rng.normal(size=(dim, dim + 2))
    s = a @ a.T
    d = np.sqrt(np.diag(s))
    c = s / np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return (c + c.T) / 2


def random_s_bar_triple(rng, lo=0.02, hi=0.98):
    """Uniform ``w12, w13`` and ``w23`` inside the admissible interval."""
    while True:
        x, y = rng.uniform(lo, hi, 2)
        h = math.sqrt(x * y * (1 - x) * (1 - y))
        z = x * y + rng.uniform(-0.95, 0.95) * h
        if -z * z + 2 * x * y * z + x * y - x * x * y - x * y * y > 0:
            return (float(x), float(y), float(z))
