"""Confidence intervals that adapt to sign restrictions on nuisance coefficients.

Normal-means form: ``Y_beta`` estimates ``beta`` and ``Y_delta`` estimates
``delta >= 0``, jointly normal with unit variances and correlation ``Omega``.
The upper one-sided interval is
``[Y_beta - min{z_{1-a+g}, W'Y_delta(s) + c}, inf)`` and the two-sided
interval shortens each arm separately using a subset with non-negative
(lower arm) or non-positive (upper arm) weights.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from ._validation import as_square, as_vector
from .critval import CriticalValuePair, Level, solve_c_one_sided, solve_cu_optimal
from .gauss import McConfig, TildeOmega, as_corr_matrix
from .select import SubsetSelection, select_one_sided, select_two_sided, tilde_omega_of
from .surface import builtin_surface, eval_surface

__all__ = [
    "SCHEMA_VERSION",
    "EstimateBundle",
    "IntervalOneSided",
    "IntervalTwoSided",
    "ci_from_estimates",
    "ci_one_sided_lower",
    "ci_one_sided_normal",
    "ci_two_sided_normal",
    "lower_arm",
    "one_sided_critical_value",
    "resolve_method",
    "two_sided_critical_values",
    "upper_bound",
]

SCHEMA_VERSION = 1
METHODS = ("auto", "surface", "exact_mc")


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclasses.dataclass(frozen=True)
class EstimateBundle:
    """Estimates ``(b_hat, d_hat)`` with ``sigma_hat``, the covariance of
    ``sqrt(n) * (b_hat - b, d_hat - d)``."""

    b_hat: float
    d_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        d = as_vector(self.d_hat, "d_hat") if np.size(self.d_hat) else np.empty(0)
        sig = as_square(self.sigma_hat, "sigma_hat", len(d) + 1)
        if not np.allclose(sig, sig.T, rtol=1e-10, atol=1e-12):
            raise ValueError("sigma_hat must be symmetric")
        if np.linalg.eigvalsh((sig + sig.T) / 2)[0] <= 0:
            raise ValueError("sigma_hat must be positive definite")
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "b_hat", float(self.b_hat))
        object.__setattr__(self, "d_hat", d)
        object.__setattr__(self, "sigma_hat", (sig + sig.T) / 2)
        object.__setattr__(self, "n", int(self.n))

    @property
    def k(self) -> int:
        return len(self.d_hat)

    @property
    def scale(self) -> float:
        """Standard error of ``b_hat``."""
        return math.sqrt(self.sigma_hat[0, 0] / self.n)

    def standardize(self):
        """``(y_beta, y_delta, Omega)`` in standard-error units."""
        sd = np.sqrt(np.diag(self.sigma_hat))
        y_beta = math.sqrt(self.n) * self.b_hat / sd[0]
        y_delta = math.sqrt(self.n) * self.d_hat / sd[1:]
        omega = self.sigma_hat / np.outer(sd, sd)
        return y_beta, y_delta, omega

    def to_dict(self) -> dict:
        return {
            "b_hat": self.b_hat,
            "d_hat": self.d_hat.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "n": self.n,
            "names": list(self.names) if self.names else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> EstimateBundle:
        names = data.get("names")
        return cls(data["b_hat"], np.asarray(data.get("d_hat", []), dtype=float),
                   np.asarray(data["sigma_hat"], dtype=float), data["n"],
                   tuple(names) if names else None)


@dataclasses.dataclass(frozen=True)
class IntervalOneSided:
    """``[bound, inf)`` for ``side="upper"``, ``(-inf, bound]`` for ``side="lower"``.

    ``critical`` is ``c`` and ``arm`` the realised ``min{z_{1-a+g}, W'y + c}``.
    """

    side: str
    bound: float
    level: Level
    used_subset: SubsetSelection
    critical: float
    arm: float
    method: str
    omega_tilde: float
    mc: dict | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "one_sided",
            "side": self.side,
            "lower": self.bound if self.side == "upper" else "-inf",
            "upper": "inf" if self.side == "upper" else self.bound,
            "alpha": self.level.alpha,
            "gamma": self.level.gamma,
            "subset": self.used_subset.to_dict(),
            "omega_tilde": self.omega_tilde,
            "critical_value": self.critical,
            "arm": self.arm,
            "method": self.method,
            "mc": self.mc,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclasses.dataclass(frozen=True)
class IntervalTwoSided:
    """``[lower, upper]``; ``degenerate`` marks crossed endpoints."""

    lower: float
    upper: float
    level: Level
    s1: SubsetSelection
    s2: SubsetSelection
    cvals: CriticalValuePair
    tilde_omega: TildeOmega
    method: str
    mc: dict | None = None

    @property
    def degenerate(self) -> bool:
        return self.lower > self.upper

    @property
    def length(self) -> float:
        return max(self.upper - self.lower, 0.0)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "two_sided",
            "lower": self.lower,
            "upper": self.upper,
            "length": self.length,
            "degenerate": self.degenerate,
            "alpha": self.level.alpha,
            "gamma": self.level.gamma,
            "s1": self.s1.to_dict(),
            "s2": self.s2.to_dict(),
            "tilde_omega": list(self.tilde_omega),
            "c_lower": _json_float(self.cvals.c_lower),
            "c_upper": _json_float(self.cvals.c_upper),
            "trunc": self.cvals.trunc,
            "method": self.method,
            "mc": self.mc,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# kernels (broadcast over arrays)


def upper_bound(y_beta, shift, c, ceiling):
    """``y_beta - min{ceiling, shift + c}``."""
    return np.asarray(y_beta) - np.minimum(ceiling, np.asarray(shift) + c)


def lower_arm(shift, c, trunc):
    """``min{trunc, shift + c}``; ``c = inf`` gives ``trunc``."""
    return np.minimum(trunc, np.asarray(shift) + c)


# ---------------------------------------------------------------------------
# critical values


def resolve_method(method: str, level: Level) -> str:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method == "auto":
        return "surface" if level.is_published else "exact_mc"
    return method


def one_sided_critical_value(level: Level, omega: float, method: str = "auto",
                             cfg: McConfig | None = None) -> tuple[float, str]:
    """``c(omega)`` by surface or simulation; ``c(0) = z_{1-a}`` exactly."""
    method = resolve_method(method, level)
    if omega == 0.0:
        return level.z_standard, method
    if method == "surface":
        return eval_surface(builtin_surface(level, "c_one_sided"), omega), method
    cfg = cfg or McConfig()
    return solve_c_one_sided(level, omega, cfg.derive("c1", omega)), method


def two_sided_critical_values(level: Level, tw: TildeOmega, method: str = "auto",
                              cfg: McConfig | None = None) -> CriticalValuePair:
    """``(c_lower, c_upper)``; the origin gives ``z_{1-a/2}`` on both arms."""
    method = resolve_method(method, level)
    tw = TildeOmega(*tw)
    if tw == (0.0, 0.0, 0.0):
        z = level.z_two_standard
        return CriticalValuePair(z, z, level.trunc, method)
    if method == "surface":
        surf = builtin_surface(level, "c_u_two_sided")
        return CriticalValuePair(eval_surface(surf, (tw.w13, tw.w12)), eval_surface(surf, (tw.w12, tw.w13)),
                                 level.trunc, "surface")
    cfg = cfg or McConfig()
    return solve_cu_optimal(level, tw, cfg.derive("c2", *tw))


def _mc_record(method, cfg):
    if method != "exact_mc":
        return None
    cfg = cfg or McConfig()
    return {"seed": cfg.seed, "draws": cfg.draws}


# ---------------------------------------------------------------------------
# normal-means intervals


def _inputs(y_beta, y_delta, omega):
    omega = as_corr_matrix(omega)
    k = omega.dim - 1
    y_delta = as_vector(y_delta, "y_delta", k) if k else np.empty(0)
    return float(y_beta), y_delta, omega


def ci_one_sided_normal(y_beta, y_delta, omega, level: Level, method: str = "auto",
                        cfg: McConfig | None = None) -> IntervalOneSided:
    """Upper one-sided interval ``[Y_beta - min{z_{1-a+g}, W'Y_delta(s) + c}, inf)``."""
    y_beta, y_delta, omega = _inputs(y_beta, y_delta, omega)
    sel = select_one_sided(omega)
    c, method = one_sided_critical_value(level, sel.objective, method, cfg)
    arm = float(min(level.z_adaptive, sel.apply(y_delta) + c))
    return IntervalOneSided("upper", y_beta - arm, level, sel, c, arm, method, sel.objective,
                            _mc_record(method, cfg))


def ci_one_sided_lower(y_beta, y_delta, omega, level: Level, method: str = "auto",
                       cfg: McConfig | None = None) -> IntervalOneSided:
    """Lower one-sided interval ``(-inf, u]`` obtained by negating ``Y_beta``."""
    y_beta, y_delta, omega = _inputs(y_beta, y_delta, omega)
    flip = np.ones(omega.dim)
    flip[0] = -1.0
    mirrored = ci_one_sided_normal(-y_beta, y_delta, np.asarray(omega) * np.outer(flip, flip), level,
                                   method, cfg)
    return dataclasses.replace(mirrored, side="lower", bound=-mirrored.bound)


def ci_two_sided_normal(y_beta, y_delta, omega, level: Level, method: str = "auto",
                        cfg: McConfig | None = None) -> IntervalTwoSided:
    """``[Y_beta - min{t, W1'Y(s1) + c_l}, Y_beta + min{t, -W2'Y(s2) + c_u}]``,
    ``t = z_{1-(a-g)/2}``."""
    y_beta, y_delta, omega = _inputs(y_beta, y_delta, omega)
    s1, s2 = select_two_sided(omega)
    tw = tilde_omega_of(omega, s1, s2)
    cv = two_sided_critical_values(level, tw, method, cfg)
    t = level.trunc
    lo = y_beta - float(lower_arm(s1.apply(y_delta), cv.c_lower, t))
    hi = y_beta + float(lower_arm(-s2.apply(y_delta), cv.c_upper, t))
    return IntervalTwoSided(lo, hi, level, s1, s2, cv, tw, cv.method, _mc_record(cv.method, cfg))


def ci_from_estimates(bundle: EstimateBundle, level: Level, side: str = "two_sided",
                      method: str = "auto", cfg: McConfig | None = None):
    """Interval for ``b`` from an estimate bundle.

    The problem is standardised to unit variances, solved in normal-means
    form, and mapped back by the standard error ``sqrt(sigma_bb / n)``.
    """
    y_beta, y_delta, omega = bundle.standardize()
    se = bundle.scale
    if side == "upper":
        iv = ci_one_sided_normal(y_beta, y_delta, omega, level, method, cfg)
        return dataclasses.replace(iv, bound=se * iv.bound)
    if side == "lower":
        iv = ci_one_sided_lower(y_beta, y_delta, omega, level, method, cfg)
        return dataclasses.replace(iv, bound=se * iv.bound)
    if side in ("two", "two_sided"):
        iv = ci_two_sided_normal(y_beta, y_delta, omega, level, method, cfg)
        return dataclasses.replace(iv, lower=se * iv.lower, upper=se * iv.upper)
    raise ValueError(f"side must be 'upper', 'lower' or 'two_sided', got {side!r}")
