"""OLS with heteroskedasticity-robust covariance, factorial designs and CSV input."""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ci import EstimateBundle, ci_from_estimates
from .critval import Level

__all__ = [
    "CONST",
    "CSVParseError",
    "CollinearityError",
    "Dataset",
    "FactorialDesign",
    "RegressionResult",
    "RegressionSpec",
    "SignRestrictedOLS",
    "factorial_design",
    "ingest_csv",
    "ols_fit",
    "robust_covariance",
    "write_csv",
]

CONST = "const"
COV_TYPES = ("HC0", "HC1")


class CSVParseError(ValueError):
    def __init__(self, path, row, column, value, reason="not a number"):
        super().__init__(f"{path}: row {row}, column {column!r}: {reason} ({value!r})")
        self.row, self.column = row, column


class CollinearityError(np.linalg.LinAlgError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; collinear column(s): {', '.join(columns)}")
        self.columns = tuple(columns)


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Named numeric columns of equal length."""

    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float).ravel()
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise ValueError(f"column {name!r} has {len(arr)} rows, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name!r} contains missing or non-finite values")
            arr.setflags(write=False)
            cols[str(name)] = arr
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; available: {', '.join(self.columns)}") from None

    def with_columns(self, **new) -> Dataset:
        return Dataset({**self.columns, **new})

    def take(self, rows) -> Dataset:
        return Dataset({k: v[rows] for k, v in self.columns.items()})


@dataclasses.dataclass(frozen=True)
class RegressionSpec:
    """Regression of ``target`` on the interest column, sign-restricted
    columns (coefficients assumed >= 0) and unrestricted controls."""

    target: str
    interest: str
    restricted: tuple[str, ...] = ()
    unrestricted: tuple[str, ...] = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "restricted", tuple(self.restricted))
        object.__setattr__(self, "unrestricted", tuple(self.unrestricted))
        regs = self.regressors
        if len(set(regs)) != len(regs):
            raise ValueError(f"regressors must be distinct, got {regs}")

    @property
    def regressors(self) -> list[str]:
        head = [CONST] if self.intercept else []
        main = [self.interest] if self.interest != CONST else []
        return head + main + list(self.restricted) + list(self.unrestricted)


@dataclasses.dataclass(frozen=True)
class RegressionResult:
    """OLS fit; ``cov`` is the robust covariance of ``sqrt(n) * coef``."""

    names: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray
    n: int
    spec: RegressionSpec
    cov_type: str

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None) / self.n)

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))

    def bundle(self, shifts: Mapping[str, float] | None = None) -> EstimateBundle:
        """``(b_hat, d_hat, sigma_hat)`` for the interest and restricted columns.

        ``shifts`` adds constants to named coefficients (re-centering).
        """
        keys = [self.spec.interest, *self.spec.restricted]
        idx = [self.index(k) for k in keys]
        est = self.coef[idx].copy()
        for name, delta in (shifts or {}).items():
            if name in keys:
                est[keys.index(name)] += delta
        return EstimateBundle(est[0], est[1:], self.cov[np.ix_(idx, idx)], self.n, tuple(keys))


def robust_covariance(X, resid, cov_type="HC1"):
    """Sandwich covariance of ``sqrt(n) * (beta_hat - beta)``."""
    if cov_type not in COV_TYPES:
        raise ValueError(f"cov_type must be one of {COV_TYPES}, got {cov_type!r}")
    n, p = X.shape
    bread = np.linalg.inv(X.T @ X / n)
    xe = X * resid[:, None]
    meat = xe.T @ xe / n
    cov = bread @ meat @ bread
    if cov_type == "HC1":
        cov *= n / (n - p)
    return (cov + cov.T) / 2


def _design(data: Dataset, spec: RegressionSpec) -> np.ndarray:
    cols = [np.ones(data.n) if name == CONST else data[name] for name in spec.regressors]
    return np.column_stack(cols)


def ols_fit(data: Dataset, spec: RegressionSpec, cov_type: str = "HC1") -> RegressionResult:
    """Least squares with HC1 (default) or HC0 robust covariance.

    Raises
    ------
    CollinearityError
        Naming the columns that are linear combinations of the others.
    """
    X = _design(data, spec)
    y = data[spec.target]
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows ({n}) than regressors ({p})")
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > diag[0] * max(n, p) * np.finfo(float).eps))
    if rank < p:
        raise CollinearityError([spec.regressors[i] for i in sorted(piv[rank:])])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    cov = robust_covariance(X, resid, cov_type)
    return RegressionResult(tuple(spec.regressors), coef, cov, resid, n, spec, cov_type)


# ---------------------------------------------------------------------------
# factorial designs

PARAMETERIZATIONS = ("interaction", "both")


def _check_binary(name, arr):
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"treatment {name!r} must be 0/1")


def factorial_columns(t1, t2, parameterization="both"):
    """``(T, C, X3, name3)`` regressors for a 2x2 design.

    ``interaction``: ``T1, T2, T1*T2`` (third named ``I``).
    ``both``: ``T1 - T1*T2, T2 - T1*T2, T1*T2`` (third named ``B``).
    """
    if parameterization not in PARAMETERIZATIONS:
        raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}")
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    _check_binary("T1", t1)
    _check_binary("T2", t2)
    both = t1 * t2
    if parameterization == "interaction":
        return t1, t2, both, "I"
    return t1 - both, t2 - both, both, "B"


def factorial_design(data: Dataset, parameterization="both", t1="T1", t2="T2") -> Dataset:
    """Add treatment regressors ``T``, ``C`` and ``I`` or ``B`` to ``data``."""
    a, b, c, third = factorial_columns(data[t1], data[t2], parameterization)
    return data.with_columns(T=a, C=b, **{third: c})


class FactorialDesign(TransformerMixin, BaseEstimator):
    """Map ``(T1, T2)`` columns to ``(1, T, C, third)`` regressors."""

    def __init__(self, parameterization="both"):
        self.parameterization = parameterization

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("expected two treatment columns (T1, T2)")
        factorial_columns(X[:, 0], X[:, 1], self.parameterization)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        a, b, c, _ = factorial_columns(X[:, 0], X[:, 1], self.parameterization)
        return np.column_stack([np.ones(len(a)), a, b, c])

    def get_feature_names_out(self, input_features=None):
        third = "I" if self.parameterization == "interaction" else "B"
        return np.array([CONST, "T", "C", third], dtype=object)


class SignRestrictedOLS(RegressorMixin, BaseEstimator):
    """OLS with an adaptive interval for one coefficient.

    Parameters
    ----------
    interest : int
        Column of ``X`` whose coefficient gets the interval.
    restricted : tuple of int
        Columns whose coefficients are known to be non-negative.
    side : {"upper", "lower", "two_sided"}
    fit_intercept : bool
        Prepend a constant column (not sign-restricted).

    Attributes
    ----------
    coef_, intercept_, covariance_, bundle_, interval_
    """

    def __init__(self, interest=0, restricted=(), alpha=0.05, gamma=None, side="two_sided",
                 method="auto", cov_type="HC1", fit_intercept=True, seed=0, draws=2_000_000):
        self.interest = interest
        self.restricted = restricted
        self.alpha = alpha
        self.gamma = gamma
        self.side = side
        self.method = method
        self.cov_type = cov_type
        self.fit_intercept = fit_intercept
        self.seed = seed
        self.draws = draws

    def fit(self, X, y):
        from .gauss import McConfig

        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        names = [f"x{j}" for j in range(X.shape[1])]
        data = Dataset({**dict(zip(names, X.T)), "y": y})
        restricted = tuple(names[j] for j in self.restricted)
        others = tuple(n for j, n in enumerate(names) if j != self.interest and n not in restricted)
        spec = RegressionSpec("y", names[self.interest], restricted, others, self.fit_intercept)
        res = ols_fit(data, spec, self.cov_type)
        order = [res.index(n) for n in names]
        self.result_ = res
        self.coef_ = res.coef[order]
        self.intercept_ = float(res.coef[0]) if self.fit_intercept else 0.0
        self.covariance_ = res.cov
        self.bundle_ = res.bundle()
        self.interval_ = ci_from_estimates(self.bundle_, Level(self.alpha, self.gamma), self.side,
                                           self.method, McConfig(draws=self.draws, seed=self.seed))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_ + self.intercept_


# ---------------------------------------------------------------------------
# CSV

def _parse_schema(schema):
    if schema is None:
        return None
    if isinstance(schema, str):
        schema = [s for s in schema.split(",") if s.strip()]
    if isinstance(schema, Mapping):
        items = dict(schema)
    else:
        items = {}
        for entry in schema:
            name, _, kind = str(entry).partition(":")
            items[name.strip()] = kind.strip() or "float"
    for name, kind in items.items():
        if kind not in ("float", "binary"):
            raise ValueError(f"unknown column type {kind!r} for {name!r}; use float or binary")
    return items


def ingest_csv(path, schema=None) -> Dataset:
    """Read a comma-separated file with a header row.

    ``schema`` lists required columns, as names, ``"name:type"`` strings, a
    comma-joined string of those, or a mapping to ``"float"``/``"binary"``.
    Without a schema every column is read.  Lines starting with ``#`` are
    skipped.  Rows with a blank cell are
    dropped and counted in a warning.

    Raises
    ------
    CSVParseError
        For a non-numeric cell, with 1-based data row and column name.
    """
    path = Path(path)
    kinds = _parse_schema(schema)
    with path.open(newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        if len(set(header)) != len(header):
            raise ValueError(f"{path}: duplicate column names in header")
        wanted = list(kinds) if kinds else header
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ValueError(f"{path}: header lacks column(s) {', '.join(missing)}")
        pos = [header.index(c) for c in wanted]
        rows, dropped = [], 0
        for rownum, row in enumerate(reader, 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise CSVParseError(path, rownum, None, ",".join(row), f"expected {len(header)} fields")
            cells = [row[p].strip() for p in pos]
            if any(cell == "" for cell in cells):
                dropped += 1
                continue
            vals = []
            for name, cell in zip(wanted, cells):
                try:
                    v = float(cell)
                except ValueError:
                    raise CSVParseError(path, rownum, name, cell) from None
                if not math.isfinite(v):
                    raise CSVParseError(path, rownum, name, cell, "non-finite value")
                if kinds and kinds[name] == "binary" and v not in (0.0, 1.0):
                    raise CSVParseError(path, rownum, name, cell, "expected 0 or 1")
                vals.append(v)
            rows.append(vals)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} row(s) with missing cells", UserWarning, stacklevel=2)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(wanted))
    return Dataset({name: arr[:, j] for j, name in enumerate(wanted)})


def write_csv(data: Dataset, path, header_lines: Sequence[str] = ()) -> None:
    """Write ``data``; values use ``repr`` so re-reading is exact."""
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names)
        for row in zip(*data.columns.values()):
            w.writerow([repr(float(v)) for v in row])
