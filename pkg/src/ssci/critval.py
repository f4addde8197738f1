"""Monte Carlo solvers for the adaptive critical values.

One-sided: ``c(w)`` solves ``P(Z1 > min{z_{1-a+g}, Z2~ + c}) = a`` for
``(Z1, Z2~) ~ N(0, [[1, w], [w, w]])``.  The probability is estimated by
conditioning on ``Z2~`` (``Z1 | Z2~ = t ~ N(t, 1 - w)``) and the root is found
by bisection.

Two-sided: the lower bound ``c_u_lower``, the companion ``c~(c_u)`` and the
expected-length minimiser ``c_u`` are computed on one fixed draw set of
``(Z2~, Z3~)``.  Coverage given those two coordinates is a difference of
normal CDFs, which keeps every estimated probability smooth in ``c`` and lets
``brentq`` solve the coverage equations.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .gauss import (
    DomainError,
    McConfig,
    TildeOmega,
    _base_normals,
    _check_s_bar,
    _psd_sqrt,
    in_s_bar,
    sample_bivariate,
    sample_trivariate,
    std_normal_quantile,
    trivariate_cov,
)

__all__ = [
    "CriticalValuePair",
    "InfeasibleError",
    "Level",
    "MCEstimate",
    "SolverError",
    "bisect",
    "bonferroni_c",
    "c_ell_by_symmetry",
    "coverage_one_sided",
    "excess_length_one_sided",
    "coverage_two_sided",
    "one_sided_conditional_coverage",
    "solve_c_one_sided",
    "solve_c_tilde",
    "solve_cu_lower_bound",
    "solve_cu_optimal",
    "two_sided_conditional_coverage",
]

#: numerical slack above the truncation quantile beyond which a critical
#: value no longer changes any interval
SATURATION_MARGIN = 6.0
#: substitute for a zero variance coordinate when solving for c~
BOUNDARY_PROXY = 1e-4
#: upper clip on w12 / w13 keeping the problem away from degenerate draws
OMEGA_CLIP = 0.999
#: probability slack treating c_u as sitting on its feasibility bound
PROB_TOL = 1e-9

PUBLISHED_ALPHAS = (0.01, 0.05, 0.1)


class SolverError(RuntimeError):
    """A root search failed; ``bracket`` holds the last interval."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class InfeasibleError(DomainError):
    """``c_u`` lies below ``c_u_lower`` so no companion value exists."""

    def __init__(self, c_u, c_u_lower):
        super().__init__(f"c_u = {c_u:.6g} is below the feasibility bound c_u_lower = {c_u_lower:.6g}")
        self.c_u = c_u
        self.c_u_lower = c_u_lower


class MCEstimate(NamedTuple):
    value: float
    se: float


@dataclasses.dataclass(frozen=True)
class Level:
    """Nominal level ``alpha`` and the split ``gamma`` (default ``alpha / 10``)."""

    alpha: float = 0.05
    gamma: float | None = None

    def __post_init__(self):
        alpha = float(self.alpha)
        gamma = alpha / 10 if self.gamma is None else float(self.gamma)
        if not 0.0 < gamma < alpha < 0.5:
            raise ValueError(f"need 0 < gamma < alpha < 0.5, got alpha={alpha}, gamma={gamma}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", gamma)

    @property
    def z_standard(self) -> float:
        """``z_{1-a}``"""
        return std_normal_quantile(1 - self.alpha)

    @property
    def z_adaptive(self) -> float:
        """``z_{1-a+g}``, the one-sided ceiling."""
        return std_normal_quantile(1 - self.alpha + self.gamma)

    @property
    def z_gamma(self) -> float:
        """``z_{1-g}``"""
        return std_normal_quantile(1 - self.gamma)

    @property
    def trunc(self) -> float:
        """``z_{1-(a-g)/2}``, the two-sided ceiling."""
        return std_normal_quantile(1 - (self.alpha - self.gamma) / 2)

    @property
    def z_two_standard(self) -> float:
        """``z_{1-a/2}``"""
        return std_normal_quantile(1 - self.alpha / 2)

    @property
    def is_published(self) -> bool:
        """Whether tabulated response surfaces exist for this level."""
        return any(math.isclose(self.alpha, a) for a in PUBLISHED_ALPHAS) and math.isclose(
            self.gamma, self.alpha / 10
        )


@dataclasses.dataclass(frozen=True)
class CriticalValuePair:
    """Two-sided critical values ``(c_lower, c_upper)``.

    Infinite values mean the corresponding arm is always truncated at
    ``trunc``.
    """

    c_lower: float
    c_upper: float
    trunc: float
    method: str
    expected_length: float | None = None
    expected_length_se: float | None = None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("c_lower", "c_upper"):
            if math.isinf(out[key]):
                out[key] = "inf"
        return out


def bisect(func, lo, hi, tol=1e-4, maxiter=200):
    """Bisection on a monotone ``func`` whose signs differ at ``lo`` and ``hi``.

    Raises
    ------
    SolverError
        If the endpoint signs agree, or ``tol`` is not reached in
        ``maxiter`` halvings.
    """
    f_lo, f_hi = func(lo), func(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise SolverError(f"root not bracketed: f({lo:.6g})={f_lo:.3g}, f({hi:.6g})={f_hi:.3g}", (lo, hi))
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        f_mid = func(mid)
        if f_mid == 0.0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise SolverError(f"bisection did not reach tol={tol} in {maxiter} iterations", (lo, hi))


def _check_omega(omega) -> float:
    omega = float(omega)
    if not 0.0 <= omega < 1.0:
        raise DomainError(f"omega must lie in [0, 1), got {omega}")
    return omega


# ---------------------------------------------------------------------------
# one-sided


def bonferroni_c(level: Level, omega: float) -> float:
    """Conservative replacement ``sqrt(1 - w) z_{1-g}`` for ``c(w)``."""
    return math.sqrt(1 - _check_omega(omega)) * level.z_gamma


def one_sided_conditional_coverage(omega, c, ceiling, z2, shift=0.0):
    """Per-draw ``P(Z1 <= min{ceiling, shift + Z2~ + c} | Z2~)``."""
    s = math.sqrt(1.0 - omega)
    return ndtr((np.minimum(ceiling, shift + z2 + c) - z2) / s)


def solve_c_one_sided(level: Level, omega: float, cfg: McConfig | None = None, *, tol=1e-4,
                      full_output=False):
    """Solve for the one-sided critical value ``c(omega)``.

    ``c(0) = z_{1-a}`` is returned without simulation.  Otherwise the
    conditional tail probability is averaged over ``cfg.draws`` values of
    ``Z2~`` and bisected on ``[0, z_{1-g}]``.

    With ``full_output=True`` also returns a dict with the Monte Carlo
    standard error of the defining probability (``prob_se``) and a
    delta-method standard error of ``c`` (``c_se``).
    """
    omega = _check_omega(omega)
    if omega == 0.0:
        c = level.z_standard
        info = {"prob_se": 0.0, "c_se": 0.0, "draws": 0}
        return (c, info) if full_output else c
    cfg = cfg or McConfig()
    z2 = np.ascontiguousarray(sample_bivariate(omega, cfg)[:, 1])
    zs, alpha = level.z_adaptive, level.alpha

    def excess(c):
        # non-coverage minus alpha; positive at 0, negative at z_{1-g}
        return 1.0 - np.mean(one_sided_conditional_coverage(omega, c, zs, z2)) - alpha

    c = bisect(excess, 0.0, level.z_gamma, tol=tol)
    if not full_output:
        return c
    s = math.sqrt(1 - omega)
    p = one_sided_conditional_coverage(omega, c, zs, z2)
    prob_se = float(p.std(ddof=1) / math.sqrt(len(p)))
    slope = float(np.mean(np.where(z2 + c < zs, np.exp(-0.5 * (c / s) ** 2) / (s * math.sqrt(2 * math.pi)), 0.0)))
    info = {"prob_se": prob_se, "c_se": prob_se / slope if slope > 0 else math.inf, "draws": cfg.draws}
    return c, info


def coverage_one_sided(level: Level, omega: float, c: float, delta_shift: float = 0.0,
                       cfg: McConfig | None = None, estimator: str = "conditional") -> MCEstimate:
    """Estimate ``P(Z1 <= min{z_{1-a+g}, delta_shift + Z2~ + c})``.

    ``estimator="conditional"`` averages the exact conditional probability
    given ``Z2~``; ``"indicator"`` counts joint draws of ``(Z1, Z2~)``.
    """
    omega = _check_omega(omega)
    if delta_shift < 0:
        raise DomainError("delta_shift must be >= 0")
    cfg = cfg or McConfig()
    draws = sample_bivariate(omega, cfg)
    zs = level.z_adaptive
    if estimator == "conditional":
        vals = one_sided_conditional_coverage(omega, c, zs, draws[:, 1], delta_shift)
    elif estimator == "indicator":
        vals = (draws[:, 0] <= np.minimum(zs, delta_shift + draws[:, 1] + c)).astype(float)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))))


def excess_length_one_sided(level: Level, omega: float, c: float, delta_shift: float = 0.0) -> float:
    """``E[min{z_{1-a+g}, delta_shift + Z2~ + c}]`` with ``Z2~ ~ N(0, w)``.

    This is the expected excess length ``E[beta - lower bound]`` of the
    upper interval; it is available in closed form once ``c`` is known.
    """
    zs, mu, sd = level.z_adaptive, delta_shift + c, math.sqrt(_check_omega(omega))
    if sd == 0.0:
        return min(zs, mu)
    d = (mu - zs) / sd
    val = mu - ((mu - zs) * float(ndtr(d)) + sd * math.exp(-0.5 * d * d) / math.sqrt(2 * math.pi))
    return min(val, zs)  # rounding can overshoot the ceiling by an ulp


# ---------------------------------------------------------------------------
# two-sided


def _interior_proxy(tw: TildeOmega) -> TildeOmega:
    w12 = min(tw.w12, OMEGA_CLIP) or BOUNDARY_PROXY
    w13 = min(tw.w13, OMEGA_CLIP) or BOUNDARY_PROXY
    return TildeOmega(w12, w13, tw.w23)


def _conditional_law(tw):
    """Regression of Z1 on (Z2~, Z3~) and a square root of their covariance."""
    cov = trivariate_cov(tw)
    s22 = cov[1:, 1:]
    coef = np.linalg.pinv(s22, rcond=1e-12, hermitian=True) @ cov[1:, 0]
    var = max(1.0 - float(cov[0, 1:] @ coef), 0.0)
    return coef, math.sqrt(var), _psd_sqrt(s22)


def _mirrored_pairs(cfg: McConfig) -> np.ndarray:
    """``(2, draws)`` iid normals closed under ``(u, v) -> (-v, -u)``."""
    if cfg.draws % 2:
        raise ValueError("mirrored sampling needs an even number of draws")
    half = _base_normals(cfg, 2, cfg.draws // 2)
    return np.concatenate([half, -half[::-1]], axis=1)


def _expand_root(func, lo, hi, increasing=True, limit=60):
    """brentq after widening ``[lo, hi]`` until ``func`` changes sign."""
    f_lo, f_hi = func(lo), func(hi)
    for _ in range(limit):
        if np.sign(f_lo) != np.sign(f_hi):
            return brentq(func, lo, hi, xtol=1e-8, rtol=1e-12)
        width = hi - lo
        if (f_lo > 0) == increasing:
            lo -= width
            f_lo = func(lo)
        else:
            hi += width
            f_hi = func(hi)
    raise SolverError("could not bracket the root", (lo, hi))


def _local_root(func, guess, cap, step=0.05):
    """Root of an increasing ``func`` searched outward from ``guess``.

    Returns ``None`` when ``func(cap) <= 0``.
    """
    cache = {}

    def f(x):
        if x not in cache:
            cache[x] = func(x)
        return cache[x]

    x0 = guess
    if f(x0) > 0:
        x1 = x0 - step
        while f(x1) > 0:
            x0, x1, step = x1, x1 - step, 2 * step
            if step > 1e3:
                raise SolverError("could not bracket the root", (x1, x0))
        lo, hi = x1, x0
    else:
        if x0 >= cap:
            return None
        x1 = min(x0 + step, cap)
        while f(x1) <= 0:
            if x1 >= cap:
                return None
            x0, x1, step = x1, min(x1 + step, cap), 2 * step
        lo, hi = x0, x1
    return brentq(f, lo, hi, xtol=1e-8, rtol=1e-12)


class _TwoSidedProblem:
    """Conditional-probability form of the two-sided problem on one draw set.

    Given ``(Z2~, Z3~)`` the law of ``Z1`` is normal, so coverage
    probabilities are averages of normal CDF differences and are smooth in
    both critical values.  The draw set is closed under the reflection that
    maps the swapped triple onto the original one.
    """

    def __init__(self, level: Level, tw, cfg: McConfig):
        self.level = level
        self.tw = _check_s_bar(tw)
        proxy = _interior_proxy(self.tw)
        if not in_s_bar(proxy):
            raise DomainError(f"boundary proxy {tuple(proxy)} of {tuple(self.tw)} is not in S-bar")
        coef, s, root = _conditional_law(proxy)
        base = _mirrored_pairs(cfg)
        self.z2 = root[0, 0] * base[0] + root[0, 1] * base[1]
        self.z3 = root[1, 0] * base[0] + root[1, 1] * base[1]
        mean = coef[0] * self.z2 + coef[1] * self.z3
        self.s = s = max(s, 1e-8)
        self.n = cfg.draws
        self.t = t = level.trunc
        self.target = 1.0 - level.alpha
        # standardised arms: Z1 <= min{t, Z2~ + c}  <=>  (Z1 - mean)/s <= min{hi_cap, a2 + c/s}
        self._a2 = (self.z2 - mean) / s
        self._hi_cap = (t - mean) / s
        self._a3 = (self.z3 - mean) / s
        self._lo_cap = (-t - mean) / s
        self._p_cap = float(ndtr(self._hi_cap).mean())
        self._p_floor = float(ndtr(self._lo_cap).mean())
        # beyond this c_u the upper arm is truncated for every draw
        self._cu_saturated = float(self.z3.max()) + t
        self._cu_lower = None
        self._last_ct = None

    def mass_below_upper(self, c_u) -> float:
        """``P(Z1 < -min{t, -Z3~ + c_u})``."""
        if c_u >= self._cu_saturated:
            return self._p_floor
        return float(ndtr(np.maximum(self._lo_cap, self._a3 - c_u / self.s)).mean())

    def mass_below_lower(self, c_l) -> float:
        """``P(Z1 <= min{t, Z2~ + c_l})``."""
        if math.isinf(c_l):
            return self._p_cap
        return float(ndtr(np.minimum(self._hi_cap, self._a2 + c_l / self.s)).mean())

    @property
    def cu_lower(self) -> float:
        if self._cu_lower is None:
            self._cu_lower = _expand_root(
                lambda c: self._p_cap - self.mass_below_upper(c) - self.target, 0.0, self.t
            )
        return self._cu_lower

    def c_tilde(self, c_u: float) -> float:
        if math.isinf(c_u):
            c_u = self._cu_saturated
        under = self.mass_below_upper(c_u)
        slack = self._p_cap - under - self.target
        if slack < -PROB_TOL:
            raise InfeasibleError(c_u, self.cu_lower)
        if slack <= PROB_TOL:
            # at the feasibility bound only an untruncated lower arm works
            return math.inf
        sat = self.t + SATURATION_MARGIN

        def gap(c_l):
            return self.mass_below_lower(c_l) - under - self.target

        guess = self._last_ct if self._last_ct is not None else self.t
        root = _local_root(gap, min(guess, sat), sat)
        if root is None:
            return math.inf
        self._last_ct = root
        return root

    def lengths(self, c_lower: float, c_upper: float) -> np.ndarray:
        lower_arm = np.minimum(self.t, self.z2 + c_lower)
        upper_arm = np.minimum(self.t, c_upper - self.z3)
        return np.maximum(lower_arm + upper_arm, 0.0)

    def objective(self, c_u: float) -> tuple[float, float]:
        c_l = self.c_tilde(c_u)
        return float(np.mean(self.lengths(c_l, c_u))), c_l


def solve_cu_lower_bound(level: Level, tw, cfg: McConfig | None = None) -> float:
    """Smallest admissible ``c_u``: root of
    ``P(-min{trunc, -Z3~ + c} <= Z1 <= trunc) = 1 - a``."""
    return _TwoSidedProblem(level, tw, cfg or McConfig()).cu_lower


def solve_c_tilde(level: Level, c_u: float, tw, cfg: McConfig | None = None) -> float:
    """Companion critical value ``c~(c_u, tw)``; ``inf`` when the lower arm
    must always be truncated.

    Coordinates ``w12 = 0`` or ``w13 = 0`` are replaced by ``1e-4``.

    Raises
    ------
    InfeasibleError
        If ``c_u`` is below ``c_u_lower(tw)``.
    """
    return _TwoSidedProblem(level, tw, cfg or McConfig()).c_tilde(float(c_u))


def _golden_min(func, lo, hi, tol):
    inv_phi = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - inv_phi * (hi - lo), lo + inv_phi * (hi - lo)
    f1, f2 = func(x1), func(x2)
    seen = [(f1, x1), (f2, x2)]
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = func(x1)
            seen.append((f1, x1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = func(x2)
            seen.append((f2, x2))
    return seen


def solve_cu_optimal(level: Level, tw, cfg: McConfig | None = None, *, tol=1e-3, n_grid=41,
                     full_output=False):
    """Expected-length minimising ``c_u`` and its companion ``c_lower``.

    The objective ``E[max{min{trunc, Z2~ + c~(c_u)} + min{trunc, -Z3~ + c_u}, 0}]``
    is evaluated on one draw set for every candidate: a coarse grid of
    ``n_grid`` points on ``[c_u_lower, trunc + 6]`` followed by golden-section
    refinement to ``tol`` around the best grid point.  Among equal objective
    values the smallest ``c_u`` wins.
    """
    cfg = cfg or McConfig()
    prob = _TwoSidedProblem(level, tw, cfg)
    lo, hi = prob.cu_lower, prob.t + SATURATION_MARGIN
    cache: dict[float, float] = {}

    def obj(c_u):
        if c_u not in cache:
            cache[c_u] = prob.objective(c_u)[0]
        return cache[c_u]

    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([obj(float(c)) for c in grid])
    i = int(np.argmin(vals))
    a, b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, n_grid - 1)])
    _golden_min(obj, a, b, tol)
    best = min(cache.items(), key=lambda kv: (kv[1], kv[0]))[0]
    c_l = prob.c_tilde(best)
    c_u = math.inf if best >= hi else best
    lengths = prob.lengths(c_l, best)
    pair = CriticalValuePair(
        c_lower=c_l,
        c_upper=c_u,
        trunc=prob.t,
        method="exact_mc",
        expected_length=float(lengths.mean()),
        expected_length_se=float(lengths.std(ddof=1) / math.sqrt(prob.n)),
    )
    if not full_output:
        return pair
    return pair, {"c_u_lower": lo, "grid": grid, "grid_objective": vals, "draws": prob.n}


def c_ell_by_symmetry(level: Level, tw, cfg: McConfig | None = None) -> float:
    """``c_lower(tw)`` computed as ``c_upper`` of the swapped triple."""
    tw = _check_s_bar(tw)
    return solve_cu_optimal(level, _check_s_bar(tw.swapped()), cfg).c_upper


def two_sided_conditional_coverage(tw, c_lower, c_upper, trunc, base, shift_lower=0.0,
                                   shift_upper=0.0):
    """Per-draw conditional coverage of the two-sided interval given (Z2~, Z3~).

    ``base`` is a ``(2, n)`` array of iid standard normals mapped to
    ``(Z2~, Z3~)`` by the symmetric square root of their covariance.
    """
    tw = _check_s_bar(tw)
    coef, s, root = _conditional_law(tw)
    z2 = root[0, 0] * base[0] + root[0, 1] * base[1]
    z3 = root[1, 0] * base[0] + root[1, 1] * base[1]
    hi = np.minimum(trunc, z2 + shift_lower + c_lower)
    lo = -np.minimum(trunc, c_upper + shift_upper - z3)
    mean = coef[0] * z2 + coef[1] * z3
    if s == 0.0:
        return ((lo <= mean) & (mean <= hi)).astype(float)
    return np.maximum(ndtr((hi - mean) / s) - ndtr((lo - mean) / s), 0.0)


def coverage_two_sided(level: Level, tw, c_lower, c_upper, cfg: McConfig | None = None,
                       shift_lower=0.0, shift_upper=0.0, estimator="conditional") -> MCEstimate:
    """Estimate ``P(max{-trunc, Z3~ - shift_upper - c_upper} <= Z1 <=
    min{trunc, Z2~ + shift_lower + c_lower})``."""
    cfg = cfg or McConfig()
    t = level.trunc
    if estimator == "conditional":
        vals = two_sided_conditional_coverage(tw, c_lower, c_upper, t, _base_normals(cfg, 2),
                                              shift_lower, shift_upper)
    elif estimator == "indicator":
        z = sample_trivariate(tw, cfg)
        hi = np.minimum(t, z[:, 1] + shift_lower + c_lower)
        lo = -np.minimum(t, c_upper + shift_upper - z[:, 2])
        vals = ((lo <= z[:, 0]) & (z[:, 0] <= hi)).astype(float)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))))
