"""Sixth-order polynomial response surfaces for the critical values.

One-sided surfaces approximate ``c(w)`` (7 terms).  Two-sided surfaces
approximate ``c_u(w12, w13)`` (28 terms, total degree <= 6); the lower value
follows from the same surface with its arguments swapped.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_points
from .critval import OMEGA_CLIP, Level
from .gauss import s_bar_margin

__all__ = [
    "FitReport",
    "PolySurface",
    "SurfaceNotAvailable",
    "builtin_surface",
    "default_grids",
    "dump_surface",
    "eval_surface",
    "fit_surface",
    "load_surface",
]

DEGREE = 6
TARGETS = ("c_one_sided", "c_u_two_sided")
FORMAT_TAG = "ssci-surface v1"

# One-sided coefficients on w^0 .. w^6.
_ONE_SIDED = {
    0.01: (2.3241, 2.5073, -19.6229, 65.0489, -122.0242, 112.9814, -40.9895),
    0.05: (1.6385, 2.4813, -16.1007, 52.6998, -98.9348, 91.7646, -33.3628),
    0.1: (1.2726, 2.4250, -14.1041, 46.0326, -86.7946, 80.8189, -29.4840),
}

# Two-sided coefficients in printed layout: row j holds the terms
# w12^i * w13^j for i = 0 .. 6 - j.
_TWO_SIDED = {
    0.05: (
        (1.9540, 1.3388, -4.5110, 11.7294, -18.8756, 15.5342, -5.2786),
        (1.1289, -0.8006, 1.1262, -1.1742, 2.1281, -0.5511),
        (-12.2929, 0.0090, 0.9084, -3.2329, 0.1723),
        (45.6505, 0.5939, 0.8153, 1.7625),
        (-92.3587, -1.0048, -0.9854),
        (89.5045, 0.2851),
        (-33.3683,),
    ),
    0.01: (
        (2.5710, 1.4378, -4.7977, 12.2591, -20.5823, 18.2815, -6.5866),
        (1.1854, -1.1672, 3.6035, -2.5234, 0.2467, 0.6751),
        (-16.4621, -2.1843, -2.6765, 0.8411, -0.6847),
        (63.1856, 8.4153, 1.0849, 0.7850),
        (-128.0372, -9.2032, -0.3625),
        (123.3096, 3.1479),
        (-45.5050,),
    ),
    0.1: (
        (1.6348, 1.2890, -4.8501, 14.0485, -23.9082, 20.3891, -7.0186),
        (1.2271, 0.0224, -0.6555, 0.7875, 1.0308, -0.5813),
        (-11.7243, -2.0585, 3.7550, -5.0051, 1.5399),
        (43.6253, 3.2898, -1.7097, 1.1221),
        (-87.8291, -2.6854, 0.6640),
        (84.6893, 0.5102),
        (-31.4176,),
    ),
}


class SurfaceNotAvailable(LookupError):
    """No tabulated surface exists for the requested level."""


def _exponents(arity: int) -> list[tuple[int, ...]]:
    if arity == 1:
        return [(i,) for i in range(DEGREE + 1)]
    return [(i, j) for i in range(DEGREE + 1) for j in range(DEGREE + 1 - i)]


def _arity(target: str) -> int:
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    return 1 if target == "c_one_sided" else 2


@dataclasses.dataclass(frozen=True)
class FitReport:
    r_squared: float
    max_abs_residual: float
    grid_size: int


class PolySurface(RegressorMixin, BaseEstimator):
    """Polynomial response surface of total degree 6.

    Parameters
    ----------
    target : {"c_one_sided", "c_u_two_sided"}
        One-sided surfaces take ``w``; two-sided surfaces take ``(w12, w13)``.
    alpha, gamma : float
        Level the surface was computed for.

    Attributes
    ----------
    coef_ : dict
        Exponent tuple to coefficient; ``(i, j)`` multiplies ``w12^i w13^j``.
    report_ : FitReport or None
        Training diagnostics when fitted from data.
    """

    def __init__(self, target="c_one_sided", alpha=0.05, gamma=None):
        self.target = target
        self.alpha = alpha
        self.gamma = gamma

    @property
    def level(self) -> Level:
        return Level(self.alpha, self.gamma)

    @property
    def arity(self) -> int:
        return _arity(self.target)

    @property
    def coeffs(self) -> dict:
        check_is_fitted(self, "coef_")
        return dict(self.coef_)

    def _set_coeffs(self, coeffs: dict) -> PolySurface:
        expected = _exponents(self.arity)
        if set(coeffs) != set(expected):
            raise ValueError(f"surface needs exactly {len(expected)} terms with total degree <= {DEGREE}")
        self.coef_ = {e: float(coeffs[e]) for e in expected}
        return self

    def fit(self, X, y):
        """Least-squares fit on points ``X`` (``(n,)`` or ``(n, arity)``)."""
        pts = as_points(X, self.arity)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != len(pts):
            raise ValueError(f"{len(pts)} points but {len(y)} values")
        terms = _exponents(self.arity)
        if len(pts) <= len(terms):
            raise ValueError(f"need more than {len(terms)} grid points, got {len(pts)}")
        if np.ptp(y) == 0.0:
            coef = np.zeros(len(terms))
            coef[0] = y[0]
        else:
            coef = _normal_equations(_design(pts, terms), y)
        self._set_coeffs(dict(zip(terms, coef)))
        resid = y - self._raw(pts)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
        self.report_ = FitReport(r2, float(np.abs(resid).max()), len(y))
        return self

    def _raw(self, pts: np.ndarray) -> np.ndarray:
        c = self.coef_
        if self.arity == 1:
            x = pts[:, 0]
            acc = np.zeros_like(x)
            for i in range(DEGREE, -1, -1):
                acc = acc * x + c[(i,)]
            return acc
        x, y = pts[:, 0], pts[:, 1]
        acc = np.zeros_like(x)
        for i in range(DEGREE, -1, -1):
            inner = np.zeros_like(y)
            for j in range(DEGREE - i, -1, -1):
                inner = inner * y + c[(i, j)]
            acc = acc * x + inner
        return acc

    def predict(self, X) -> np.ndarray:
        """Surface values, coordinates clipped to ``[0, 0.999]``, clamped at 0."""
        check_is_fitted(self, "coef_")
        pts = np.clip(as_points(X, self.arity), 0.0, OMEGA_CLIP)
        return np.maximum(self._raw(pts), 0.0)


def _design(pts: np.ndarray, terms) -> np.ndarray:
    cols = [np.prod([pts[:, d] ** e[d] for d in range(len(e))], axis=0) for e in terms]
    return np.column_stack(cols)


def _normal_equations(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    scale = np.abs(A).max(axis=0)
    if np.any(scale == 0.0):
        raise np.linalg.LinAlgError("rank-deficient basis: a monomial vanishes on the whole grid")
    As = A / scale
    gram = As.T @ As
    lam = np.linalg.eigvalsh(gram)
    if lam[0] <= lam[-1] * 1e-15:
        raise np.linalg.LinAlgError(f"rank-deficient basis on this grid (condition number {lam[-1] / max(lam[0], 1e-300):.3g})")
    return np.linalg.solve(gram, As.T @ y) / scale


def builtin_surface(level: Level, target: str) -> PolySurface:
    """Tabulated surface for ``alpha`` in {0.01, 0.05, 0.1} with ``gamma = alpha / 10``."""
    arity = _arity(target)
    if not level.is_published:
        raise SurfaceNotAvailable(
            f"no tabulated surface for alpha={level.alpha}, gamma={level.gamma}; "
            "solve critical values on a grid and use fit_surface"
        )
    key = min(_ONE_SIDED, key=lambda a: abs(a - level.alpha))
    if arity == 1:
        coeffs = {(i,): v for i, v in enumerate(_ONE_SIDED[key])}
    else:
        coeffs = {(i, j): v for j, row in enumerate(_TWO_SIDED[key]) for i, v in enumerate(row)}
    return PolySurface(target, key, key / 10)._set_coeffs(coeffs)


def eval_surface(s: PolySurface, point) -> float:
    """Evaluate at ``w`` or ``(w12, w13)``; a third coordinate ``w23`` is ignored."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if s.arity == 2 and p.size == 3:
        p = p[:2]
    return float(s.predict(p.reshape(1, -1))[0])


def fit_surface(level: Level, target: str, grid, values) -> tuple[PolySurface, FitReport]:
    """Unweighted least-squares fit of a degree-6 surface to solved values."""
    surf = PolySurface(target, level.alpha, level.gamma).fit(grid, values)
    return surf, surf.report_


def surface_grid_g() -> np.ndarray:
    """The coordinate set {0, .005, .01..0.1, .15..0.9, .91..0.99, .995}."""
    parts = [
        [0.0, 0.005],
        np.arange(1, 11) / 100,
        np.arange(3, 19) / 20,
        np.arange(91, 100) / 100,
        [0.995],
    ]
    return np.round(np.concatenate(parts), 10)


def default_grids(target: str) -> np.ndarray:
    """Training grids: ``(1000,)`` for one-sided, ``(n, 3)`` S-bar triples otherwise."""
    if _arity(target) == 1:
        return np.arange(1000) / 1000
    g = surface_grid_g()
    w23 = np.unique(np.round(np.concatenate([-g, g, np.arange(-99, 100) / 100]), 10))
    x, y, z = (a.ravel() for a in np.meshgrid(g, g, w23, indexing="ij"))
    keep = np.where(
        (x > 0) & (y > 0),
        s_bar_margin(x, y, z) > 0,
        (z == 0) & ((y == 0) | (x == 0)),
    )
    return np.column_stack([x[keep], y[keep], z[keep]])


def dump_surface(s: PolySurface, path) -> None:
    """Write a surface as text; coefficients use ``repr`` so reloading is exact."""
    check_is_fitted(s, "coef_")
    names = "w" if s.arity == 1 else "w12^i * w13^j"
    lines = [
        f"# {FORMAT_TAG}",
        f"target = {s.target}",
        f"alpha = {s.level.alpha!r}",
        f"gamma = {s.level.gamma!r}",
        f"arity = {s.arity}",
        f"basis = exponent-lexicographic; term = {names}",
        f"terms = {len(s.coef_)}",
    ]
    for e in _exponents(s.arity):
        lines.append(f"{' '.join(map(str, e))} -> {s.coef_[e]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_surface(path) -> PolySurface:
    header, coeffs = {}, {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "->" in line:
            lhs, rhs = line.split("->")
            coeffs[tuple(int(v) for v in lhs.split())] = float(rhs)
        elif "=" in line:
            k, v = line.split("=", 1)
            header[k.strip()] = v.strip()
        else:
            raise ValueError(f"{path}:{n}: cannot parse {line!r}")
    try:
        surf = PolySurface(header["target"], float(header["alpha"]), float(header["gamma"]))
    except KeyError as exc:
        raise ValueError(f"{path}: missing header field {exc}") from None
    if int(header.get("terms", len(coeffs))) != len(coeffs):
        raise ValueError(f"{path}: header says {header['terms']} terms, found {len(coeffs)}")
    return surf._set_coeffs(coeffs)
