"""Numerical studies: length curves, coverage scans and a bootstrap harness.

All outputs are plain dataclasses with CSV writers; nothing here plots.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .ci import EstimateBundle, ci_from_estimates, one_sided_critical_value, two_sided_critical_values
from .critval import (
    Level,
    excess_length_one_sided,
    one_sided_conditional_coverage,
    solve_c_one_sided,
    solve_cu_optimal,
    two_sided_conditional_coverage,
)
from .gauss import McConfig, TildeOmega, _base_normals, in_s_bar
from .regress import CONST, Dataset, RegressionSpec, factorial_design, ols_fit, write_csv

__all__ = [
    "BootstrapTable",
    "CoverageScan",
    "LengthCurve",
    "LengthSurface",
    "bootstrap_study",
    "coverage_scan",
    "default_delta_grid",
    "excess_length_curve_delta",
    "excess_length_curve_omega",
    "expected_length_surface",
    "load_synthetic_factorial",
    "make_synthetic_factorial",
    "worker_count",
    "write_synthetic_factorial",
]

DATA_DIR = Path(__file__).parent / "data"
SYNTHETIC_CSV = DATA_DIR / "synthetic_factorial.csv"


def worker_count() -> int:
    """Thread cap from ``SSCI_THREADS`` (default 1)."""
    raw = os.environ.get("SSCI_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ValueError(f"SSCI_THREADS must be a positive integer, got {raw!r}")
    return n


def _pmap(func, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        return list(pool.map(func, items))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path, header: Mapping[str, object], columns: Sequence[str], rows) -> None:
    lines = [f"# {k} = {_fmt(v)}" for k, v in header.items()]
    body = [",".join(columns)] + [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines + body) + "\n")


# ---------------------------------------------------------------------------
# length curves


@dataclasses.dataclass
class LengthCurve:
    """Expected (excess) length curves on a common abscissa."""

    abscissa: str
    x: np.ndarray
    curves: dict[str, np.ndarray]
    se: dict[str, np.ndarray]
    meta: dict

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("abscissa must be strictly increasing")

    def to_csv(self, path) -> None:
        cols = [self.abscissa]
        for name in self.curves:
            cols += [name, f"{name}_se"]
        rows = []
        for i, x in enumerate(self.x):
            row = [x]
            for name, vals in self.curves.items():
                row += [vals[i], self.se[name][i]]
            rows.append(row)
        _write_table(path, self.meta, cols, rows)


def _solve_with_se(level, omega, cfg):
    c, info = solve_c_one_sided(level, omega, cfg, full_output=True)
    return c, info["c_se"]


def excess_length_curve_omega(level: Level, omega_grid, cfg: McConfig | None = None) -> LengthCurve:
    """Expected excess length at ``delta = 0`` as a function of ``omega``.

    Also returns the standard value ``z_{1-a}`` and the pointwise optimum
    ``sqrt(1 - w) z_{1-a}``.  Standard errors propagate the Monte Carlo
    error of ``c(w)`` through the closed-form length.
    """
    cfg = cfg or McConfig(draws=500_000)
    grid = np.asarray(omega_grid, dtype=float)
    solved = _pmap(lambda w: _solve_with_se(level, w, cfg.derive("fig1", w)), grid)
    eel, se = [], []
    for w, (c, c_se) in zip(grid, solved):
        eel.append(excess_length_one_sided(level, w, c))
        slope = float(ndtr((level.z_adaptive - c) / math.sqrt(w))) if w > 0 else float(c < level.z_adaptive)
        se.append(slope * c_se)
    zeros = np.zeros(len(grid))
    return LengthCurve(
        "omega",
        grid,
        {"adaptive": np.array(eel), "standard": np.full(len(grid), level.z_standard),
         "optimal_at_zero": np.sqrt(1 - grid) * level.z_standard},
        {"adaptive": np.array(se), "standard": zeros, "optimal_at_zero": zeros},
        _meta("fig1", level, cfg),
    )


def default_delta_grid() -> np.ndarray:
    return np.append(np.arange(0, 33) * 0.25, 50.0)


def excess_length_curve_delta(level: Level, omega: float, delta_grid=None,
                              cfg: McConfig | None = None) -> LengthCurve:
    """Expected excess length against ``delta`` for ``k = 1`` and ``rho = sqrt(omega)``.

    Curves: adaptive, standard (``z_{1-a}``) and the interval optimal at
    ``delta = 0`` (``rho * delta + sqrt(1 - rho^2) z_{1-a}``).
    """
    cfg = cfg or McConfig(draws=500_000)
    grid = default_delta_grid() if delta_grid is None else np.asarray(delta_grid, dtype=float)
    if np.any(grid < 0):
        raise ValueError("delta grid must be non-negative")
    c, c_se = _solve_with_se(level, omega, cfg.derive("fig2", omega))
    rho = math.sqrt(omega)
    eel = np.array([excess_length_one_sided(level, omega, c, rho * d) for d in grid])
    if omega > 0:
        slope = ndtr((level.z_adaptive - c - rho * grid) / rho)
    else:
        slope = np.full(len(grid), float(c < level.z_adaptive))
    zeros = np.zeros(len(grid))
    meta = _meta("fig2", level, cfg) | {"omega": omega, "c": c}
    return LengthCurve(
        "delta",
        grid,
        {"adaptive": eel, "standard": np.full(len(grid), level.z_standard),
         "optimal_at_zero": rho * grid + math.sqrt(1 - omega) * level.z_standard},
        {"adaptive": slope * c_se, "standard": zeros, "optimal_at_zero": zeros},
        meta,
    )


def _meta(kind, level, cfg, method=None):
    out = {"study": kind, "alpha": level.alpha, "gamma": level.gamma}
    if cfg is not None:
        out |= {"seed": cfg.seed, "draws": cfg.draws}
    if method is not None:
        out["method"] = method
    return out


# ---------------------------------------------------------------------------
# expected-length surface


def w23_levels(w12: float, w13: float, fractions=(0.0,)) -> list[float]:
    """``w23`` values ``w12 w13 + f * h`` with ``h`` the half-width of the
    admissible interval; only ``0`` when either coordinate is zero."""
    if w12 == 0.0 or w13 == 0.0:
        return [0.0]
    centre = w12 * w13
    half = math.sqrt(w12 * w13 * (1 - w12) * (1 - w13))
    return sorted({round(centre + f * half, 12) for f in fractions})


@dataclasses.dataclass
class LengthSurface:
    points: np.ndarray  # (n, 3) triples
    length: np.ndarray
    se: np.ndarray
    c_lower: np.ndarray
    c_upper: np.ndarray
    meta: dict

    def spread(self) -> float:
        """Largest range of expected length across ``w23`` at fixed ``(w12, w13)``."""
        keys = {}
        for (a, b, _), v in zip(self.points, self.length):
            keys.setdefault((a, b), []).append(v)
        return max((max(v) - min(v) for v in keys.values()), default=0.0)

    def to_csv(self, path) -> None:
        rows = [(*p, l, s, cl, cu) for p, l, s, cl, cu in
                zip(self.points, self.length, self.se, self.c_lower, self.c_upper)]
        _write_table(path, self.meta | {"w23_spread": self.spread()},
                     ["w12", "w13", "w23", "expected_length", "se", "c_lower", "c_upper"], rows)


def expected_length_surface(level: Level, grid, cfg: McConfig | None = None,
                            w23_fractions=(0.0,)) -> LengthSurface:
    """Expected length at optimised ``(c_lower, c_upper)``.

    ``grid`` holds ``(w12, w13)`` pairs, expanded over ``w23`` levels, or
    explicit ``(w12, w13, w23)`` triples.
    """
    cfg = cfg or McConfig(draws=500_000)
    pts = []
    for p in np.asarray(grid, dtype=float).reshape(len(grid), -1):
        if len(p) == 3:
            pts.append(tuple(p))
        else:
            pts += [(p[0], p[1], z) for z in w23_levels(p[0], p[1], w23_fractions)]
    bad = [p for p in pts if not in_s_bar(p)]
    if bad:
        raise ValueError(f"points outside S-bar: {bad[:3]}")
    pairs = _pmap(lambda p: solve_cu_optimal(level, p, cfg.derive("fig3", *p)), pts)
    return LengthSurface(
        np.array(pts),
        np.array([q.expected_length for q in pairs]),
        np.array([q.expected_length_se for q in pairs]),
        np.array([q.c_lower for q in pairs]),
        np.array([q.c_upper for q in pairs]),
        _meta("fig3", level, cfg),
    )


# ---------------------------------------------------------------------------
# coverage scans


@dataclasses.dataclass
class CoverageScan:
    points: np.ndarray
    coverage: np.ndarray
    se: np.ndarray
    meta: dict

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.coverage))

    @property
    def min(self) -> float:
        return float(self.coverage[self.argmin])

    @property
    def min_point(self) -> tuple:
        return tuple(np.atleast_1d(self.points[self.argmin]).tolist())

    def to_csv(self, path) -> None:
        pts = self.points.reshape(len(self.points), -1)
        names = ["omega"] if pts.shape[1] == 1 else ["w12", "w13", "w23"]
        rows = [(*p, c, s) for p, c, s in zip(pts, self.coverage, self.se)]
        meta = self.meta | {"min_coverage": self.min, "argmin": " ".join(map(_fmt, self.min_point))}
        _write_table(path, meta, names + ["coverage", "se"], rows)


def scan_grid(side: str, step: float, w23_fractions=(-0.9, 0.0, 0.9)) -> np.ndarray:
    """One-sided: ``{0, step, ...} < 1``.  Two-sided: pairs on that grid with
    ``w12 <= w13`` and ``w23`` at the given fractions of the admissible
    half-width around ``w12 w13``."""
    m = int(round(1 / step))
    axis = np.round(np.arange(m) * step, 12)
    axis = axis[axis < 1]
    if side == "one":
        return axis
    pts = [(a, b, z) for i, a in enumerate(axis) for b in axis[i:] for z in w23_levels(a, b, w23_fractions)]
    return np.array([p for p in pts if in_s_bar(p)])


def coverage_scan(level: Level, side: str = "one", grid=None, cfg: McConfig | None = None,
                  method: str = "surface", step: float = 0.01,
                  w23_fractions=(-0.9, 0.0, 0.9)) -> CoverageScan:
    """Coverage at ``delta = 0`` over a grid, critical values from ``method``.

    Every point reuses one base draw set (common random numbers) and the
    conditional-probability estimator.  For two-sided scans the grid covers
    ``w12 <= w13``; the swapped triple has the same coverage because its
    critical values are swapped too.
    """
    cfg = cfg or McConfig(draws=1_000_000)
    if side not in ("one", "two"):
        raise ValueError("side must be 'one' or 'two'")
    grid = scan_grid(side, step, w23_fractions) if grid is None else np.asarray(grid, dtype=float)
    meta = _meta(f"coverage_{side}", level, cfg, method) | {"step": step, "points": len(grid)}
    if side == "one":
        w = _base_normals(cfg, 1)[0]
        zs = level.z_adaptive

        def point(omega):
            c, _ = one_sided_critical_value(level, float(omega), method, cfg)
            p = one_sided_conditional_coverage(omega, c, zs, math.sqrt(omega) * w)
            return float(p.mean()), float(p.std(ddof=1) / math.sqrt(len(p)))
    else:
        base = _base_normals(cfg, 2)
        t = level.trunc
        meta["w23_fractions"] = " ".join(map(_fmt, w23_fractions))

        def point(tw):
            cv = two_sided_critical_values(level, TildeOmega(*tw), method, cfg)
            p = two_sided_conditional_coverage(tw, cv.c_lower, cv.c_upper, t, base)
            return float(p.mean()), float(p.std(ddof=1) / math.sqrt(len(p)))

    res = _pmap(point, grid)
    return CoverageScan(grid, np.array([r[0] for r in res]), np.array([r[1] for r in res]), meta)


# ---------------------------------------------------------------------------
# bootstrap


@dataclasses.dataclass(frozen=True)
class FactorialTarget:
    """One coefficient studied in the bootstrap."""

    name: str
    side: str  # "upper" or "two_sided"
    parameterization: str
    restricted: tuple[str, ...]


FACTORIAL_TARGETS = (
    FactorialTarget("T", "upper", "both", ("C",)),
    FactorialTarget("C", "upper", "both", ("T",)),
    FactorialTarget("B", "two_sided", "both", ("T", "C")),
    FactorialTarget("I", "two_sided", "interaction", ("T", "C")),
)


@dataclasses.dataclass
class BootstrapTable:
    rows: list[dict]
    meta: dict

    COLUMNS = ("coefficient", "side", "truth", "cp_ssci", "cp_ssci_se", "el_ssci", "el_ssci_se",
               "cp_standard", "el_standard", "ratio", "ratio_se")

    def row(self, name) -> dict:
        return next(r for r in self.rows if r["coefficient"] == name)

    def to_csv(self, path) -> None:
        _write_table(path, self.meta, self.COLUMNS, [[r[c] for c in self.COLUMNS] for r in self.rows])


def _fit_factorial(data: Dataset, parameterization: str, controls, y: str):
    d = factorial_design(data, parameterization)
    third = "I" if parameterization == "interaction" else "B"
    regs = ("T", "C", third)
    return ols_fit(d, RegressionSpec(y, CONST, (), regs + tuple(controls))), third


def _bundle(res, target: FactorialTarget, shifts) -> EstimateBundle:
    keys = [target.name, *target.restricted]
    idx = [res.index(k) for k in keys]
    est = res.coef[idx] + np.array([shifts.get(k, 0.0) for k in keys])
    return EstimateBundle(est[0], est[1:], res.cov[np.ix_(idx, idx)], res.n, tuple(keys))


def bootstrap_study(data: Dataset, level: Level, reps: int = 2000, recenter: Mapping[str, float | str] | None = None,
                    cfg: McConfig | None = None, method: str = "surface", controls: Sequence[str] = (),
                    y: str = "y", targets: Sequence[FactorialTarget] = FACTORIAL_TARGETS) -> BootstrapTable:
    """Nonparametric bootstrap of a 2x2 factorial regression.

    Rows are resampled with replacement; in each sample both
    parameterizations are refitted with robust covariance and every target
    gets an adaptive and a standard interval.  The truth for a coefficient
    is its full-sample estimate plus its ``recenter`` shift; the same shift
    is added to every bootstrap estimate of that coefficient; a shift of
    ``"zero"`` sets the truth to 0.
    Excess length (``truth - lower bound``) is reported for one-sided
    targets and length for two-sided ones.
    """
    if reps < 100:
        raise ValueError("reps must be >= 100")
    cfg = cfg or McConfig()
    full = {p: _fit_factorial(data, p, controls, y)[0] for p in ("both", "interaction")}
    shifts = {}
    for name, shift in (recenter or {}).items():
        # "zero" moves the truth of ``name`` to the boundary of its parameter space
        shifts[name] = -full["both"].params()[name] if shift == "zero" else float(shift)
    truth = {t.name: full[t.parameterization].params()[t.name] + shifts.get(t.name, 0.0) for t in targets}
    z1, z2 = level.z_standard, level.z_two_standard
    children = np.random.SeedSequence(cfg.seed).spawn(reps)

    def one_rep(seq):
        rng = np.random.Generator(np.random.Philox(seq))
        sample = data.take(rng.integers(0, data.n, data.n))
        fits = {p: _fit_factorial(sample, p, controls, y)[0] for p in ("both", "interaction")}
        out = []
        for t in targets:
            b = _bundle(fits[t.parameterization], t, shifts)
            iv = ci_from_estimates(b, level, t.side, method, cfg)
            tr, se = truth[t.name], b.scale
            if t.side == "upper":
                out.append((iv.bound <= tr, tr - iv.bound, b.b_hat - z1 * se <= tr, tr - b.b_hat + z1 * se))
            else:
                out.append((iv.lower <= tr <= iv.upper, iv.length, abs(b.b_hat - tr) <= z2 * se, 2 * z2 * se))
        return out

    res = np.array(_pmap(one_rep, children), dtype=float)  # (reps, targets, 4)
    rows = []
    for j, t in enumerate(targets):
        cov_s, len_s, cov_c, len_c = res[:, j, :].T
        ratio = len_s.mean() / len_c.mean()
        # delta-method SE of a ratio of means
        g = (len_s - ratio * len_c) / len_c.mean()
        rows.append({
            "coefficient": t.name, "side": t.side, "truth": truth[t.name],
            "cp_ssci": cov_s.mean(), "cp_ssci_se": cov_s.std(ddof=1) / math.sqrt(reps),
            "el_ssci": len_s.mean(), "el_ssci_se": len_s.std(ddof=1) / math.sqrt(reps),
            "cp_standard": cov_c.mean(), "el_standard": len_c.mean(),
            "ratio": ratio, "ratio_se": g.std(ddof=1) / math.sqrt(reps),
        })
    meta = _meta("bootstrap", level, cfg, method) | {
        "reps": reps, "n": data.n,
        "recenter": " ".join(f"{k}:{_fmt(v)}" for k, v in sorted(shifts.items())) or "none",
    }
    return BootstrapTable(rows, meta)


# ---------------------------------------------------------------------------
# synthetic calibration data


def make_synthetic_factorial(n: int = 947, seed: int = 20240601, effects=(0.0829, -0.1316, 0.2955)) -> Dataset:
    """A 2x2 experiment with skewed, heteroskedastic errors.

    ``effects`` are the main effects of ``T1`` and ``T2`` and their
    interaction.  Arms are assigned in equal expected proportions; one
    unrestricted control ``x1`` enters the outcome.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    arm = rng.integers(0, 4, n)
    t1 = (arm % 2).astype(float)
    t2 = (arm // 2).astype(float)
    x1 = rng.normal(size=n)
    # centred chi-square(3) noise, scale depending on arm and control
    shock = (rng.chisquare(3, n) - 3) / math.sqrt(6)
    scale = 0.8 + 0.3 * t1 + 0.2 * t2 + 0.15 * np.abs(x1)
    a1, a2, a3 = effects
    yv = 0.1 + a1 * t1 + a2 * t2 + a3 * t1 * t2 + 0.25 * x1 + scale * shock
    return Dataset({"y": yv, "T1": t1, "T2": t2, "x1": x1})


def load_synthetic_factorial() -> Dataset:
    """The bundled calibration dataset."""
    from .regress import ingest_csv

    return ingest_csv(SYNTHETIC_CSV, "y,T1:binary,T2:binary,x1")


def write_synthetic_factorial(path=SYNTHETIC_CSV, **kw) -> None:
    data = make_synthetic_factorial(**kw)
    write_csv(data, path, ["synthetic 2x2 factorial calibration data", f"n = {data.n}"])
