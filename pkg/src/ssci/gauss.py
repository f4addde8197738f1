"""Gaussian primitives: quantiles, seeded sampling, correlation-set membership.

All random draws go through :class:`McConfig`, which pins the generator
(Philox, counter-based) and the seed.  Grid sweeps derive per-point seeds with
:meth:`McConfig.derive` so that results do not depend on evaluation order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
from collections.abc import Iterator
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "CorrMatrix",
    "DomainError",
    "McConfig",
    "TildeOmega",
    "as_corr_matrix",
    "in_s_bar",
    "normal_batches",
    "s_bar_margin",
    "sample_bivariate",
    "sample_trivariate",
    "std_normal_cdf",
    "std_normal_quantile",
    "trivariate_cov",
]

_EIG_CLIP = 1e-12


class DomainError(ValueError):
    """An argument lies outside the set on which a quantity is defined."""


def std_normal_cdf(x):
    """Standard normal CDF, vectorised."""
    return ndtr(x)


def std_normal_quantile(p):
    """Return ``z_p``, the ``p``-th quantile of the standard normal.

    Raises
    ------
    DomainError
        If any ``p`` lies outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# configuration


@dataclasses.dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    Parameters
    ----------
    draws : int
        Number of replications (at least 10,000).
    seed : int
        Base seed, reduced modulo 2**64.
    batch : int, optional
        Draws generated per batch; must divide ``draws``.  Defaults to
        ``draws`` (a single batch).
    """

    draws: int = 2_000_000
    seed: int = 0
    batch: int | None = None

    def __post_init__(self):
        if int(self.draws) != self.draws or self.draws < 10_000:
            raise ValueError(f"draws must be an integer >= 10000, got {self.draws}")
        batch = self.draws if self.batch is None else int(self.batch)
        if batch <= 0 or self.draws % batch:
            raise ValueError(f"batch ({batch}) must divide draws ({self.draws})")
        object.__setattr__(self, "draws", int(self.draws))
        object.__setattr__(self, "batch", batch)
        object.__setattr__(self, "seed", int(self.seed) % 2**64)

    def derive(self, *key) -> McConfig:
        """Return a config whose seed is a hash of this seed and ``key``.

        Floats in ``key`` are rounded to 1e-9 so that grid coordinates built
        by different arithmetic paths map to the same stream.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<Q", self.seed))
        for item in key:
            if isinstance(item, (float, np.floating)):
                h.update(b"f" + repr(round(float(item), 9)).encode())
            else:
                h.update(b"s" + repr(item).encode())
        seed = int.from_bytes(h.digest(), "little")
        return dataclasses.replace(self, seed=seed)

    def with_draws(self, draws: int) -> McConfig:
        return McConfig(draws=draws, seed=self.seed)


def normal_batches(cfg: McConfig, dim: int) -> Iterator[np.ndarray]:
    """Yield ``(dim, batch)`` arrays of iid standard normals.

    Batch ``i`` is drawn from Philox keyed by ``SeedSequence(seed).spawn``,
    so the concatenated stream is fixed by ``(seed, draws, batch)``.
    """
    yield from _normal_batches(cfg.seed, dim, cfg.draws, cfg.batch)


def _normal_batches(seed: int, dim: int, n: int, batch: int) -> Iterator[np.ndarray]:
    children = np.random.SeedSequence(seed).spawn(-(-n // batch))
    for i, child in enumerate(children):
        gen = np.random.Generator(np.random.Philox(child))
        yield gen.standard_normal((dim, min(batch, n - i * batch)))


def _base_normals(cfg: McConfig, dim: int, n: int | None = None) -> np.ndarray:
    n = cfg.draws if n is None else n
    return np.concatenate(list(_normal_batches(cfg.seed, dim, n, cfg.batch)), axis=1)


# ---------------------------------------------------------------------------
# correlation objects


class TildeOmega(NamedTuple):
    """The triple (w12, w13, w23) indexing the two-sided problem."""

    w12: float
    w13: float
    w23: float

    def swapped(self) -> TildeOmega:
        return TildeOmega(self.w13, self.w12, self.w23)


def s_bar_margin(x, y, z):
    """``-z^2 + 2xyz + xy - x^2 y - x y^2``: the determinant of
    ``[[1, x, y], [x, x, z], [y, z, y]]``.  Vectorised."""
    return -z * z + 2 * x * y * z + x * y - x * x * y - x * y * y


def _s_bar_reason(tw) -> str | None:
    x, y, z = (float(v) for v in tw)
    if not (0.0 <= x < 1.0 and 0.0 <= y < 1.0 and -1.0 < z < 1.0):
        return f"components out of range: w12, w13 in [0,1), w23 in (-1,1); got {tuple(tw)}"
    if x > 0.0 and y > 0.0:
        m = s_bar_margin(x, y, z)
        if m > 0.0:
            return None
        return f"-w23^2 + 2 w12 w13 w23 + w12 w13 - w12^2 w13 - w12 w13^2 = {m:.3g} is not > 0"
    if y == 0.0 and z == 0.0:
        return None
    if x == 0.0 and z == 0.0 and y > 0.0:
        return None
    return "with w12 = 0 or w13 = 0 the triple must have w23 = 0"


def in_s_bar(tw) -> bool:
    """Membership of ``(w12, w13, w23)`` in the admissible set S-bar."""
    return _s_bar_reason(tw) is None


def _check_s_bar(tw) -> TildeOmega:
    reason = _s_bar_reason(tw)
    if reason is not None:
        raise DomainError(f"{tuple(tw)} is not in S-bar: {reason}")
    return TildeOmega(*(float(v) for v in tw))


def trivariate_cov(tw) -> np.ndarray:
    """Covariance of (Z1, Z2~, Z3~) for the triple ``tw``."""
    x, y, z = tw
    return np.array([[1.0, x, y], [x, x, z], [y, z, y]])


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(cov)
    if lam.min() < -_EIG_CLIP:
        raise DomainError(f"covariance is not positive semi-definite (min eigenvalue {lam.min():.3g})")
    lam = np.where(np.abs(lam) < _EIG_CLIP, 0.0, lam)
    return (vec * np.sqrt(lam)) @ vec.T


@dataclasses.dataclass(frozen=True)
class CorrMatrix:
    """Validated correlation matrix (symmetric, unit diagonal, PD)."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"correlation matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, atol=1e-10):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(a), 1.0, atol=1e-10):
            raise ValueError("correlation matrix must have a unit diagonal")
        a = (a + a.T) / 2
        np.fill_diagonal(a, 1.0)
        off = a[~np.eye(len(a), dtype=bool)]
        if off.size and np.any(np.abs(off) >= 1.0):
            raise ValueError("off-diagonal correlations must lie in (-1, 1)")
        if np.linalg.eigvalsh(a).min() <= 0.0:
            raise ValueError("correlation matrix must be positive definite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def as_corr_matrix(omega) -> CorrMatrix:
    return omega if isinstance(omega, CorrMatrix) else CorrMatrix(np.asarray(omega, dtype=float))


# ---------------------------------------------------------------------------
# sampling


def sample_bivariate(omega: float, cfg: McConfig) -> np.ndarray:
    """Draw ``(Z1, Z2~)`` with covariance ``[[1, w], [w, w]]``.

    Uses ``Z2~ = w Z1 + sqrt(w - w^2) W``; at ``w = 0`` the second column is
    identically zero.  Returns an array of shape ``(draws, 2)``.
    """
    omega = float(omega)
    if not 0.0 <= omega < 1.0:
        raise DomainError(f"omega must lie in [0, 1), got {omega}")
    base = _base_normals(cfg, 2)
    out = np.empty_like(base)
    out[0] = base[0]
    out[1] = omega * base[0] + np.sqrt(omega - omega * omega) * base[1]
    return out.T


def sample_trivariate(tw, cfg: McConfig, mirror: bool = False) -> np.ndarray:
    """Draw ``(Z1, Z2~, Z3~)`` with the covariance of :func:`trivariate_cov`.

    The factor is the symmetric PSD square root (eigenvalues within 1e-12 of
    zero are set to zero), which stays valid on the boundary of S-bar.

    With ``mirror=True`` only ``draws / 2`` base vectors are generated and
    each is paired with its image under ``(w1, w2, w3) -> (-w1, -w3, -w2)``.
    The resulting draw set for the swapped triple ``(w13, w12, w23)`` is the
    mirror image of the draw set for ``tw``, so quantities related by that
    swap are computed exactly consistently.

    Raises
    ------
    DomainError
        If ``tw`` is not in S-bar.
    """
    tw = _check_s_bar(tw)
    root = _psd_sqrt(trivariate_cov(tw))
    if mirror:
        if cfg.draws % 2:
            raise ValueError("mirrored sampling needs an even number of draws")
        w = _base_normals(cfg, 3, cfg.draws // 2)
        w = np.concatenate([w, np.stack([-w[0], -w[2], -w[1]])], axis=1)
    else:
        w = _base_normals(cfg, 3)
    return (root @ w).T
