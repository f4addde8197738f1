"""Subset search for the sign-restricted coordinates used by the intervals.

For a subset ``s`` of the restricted coordinates the weights are
``W = Omega_{b,s} Omega_{s,s}^{-1}`` and the objective is ``W Omega_{s,b}``:
the variance of the projection of ``Z_beta`` onto ``Z_s``.  The selected
subset maximises the objective among subsets whose weights carry the right
sign.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import warnings

import numpy as np

from .critval import OMEGA_CLIP, Level, excess_length_one_sided, solve_c_one_sided
from .gauss import McConfig, TildeOmega, as_corr_matrix, in_s_bar, s_bar_margin

__all__ = [
    "MAX_RESTRICTED",
    "SubsetSelection",
    "enumerate_subsets",
    "select_exact_one_sided",
    "select_one_sided",
    "select_two_sided",
    "tilde_omega_of",
]

MAX_RESTRICTED = 20
SIGN_SLACK = 1e-12
TIE_TOL = 1e-12
MIN_EIGENVALUE = 1e-10


@dataclasses.dataclass(frozen=True)
class SubsetSelection:
    """A subset of the restricted coordinates (1-based) with its weights."""

    indices: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    objective: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must have equal length")
        if list(self.indices) != sorted(set(self.indices)) or any(i < 1 for i in self.indices):
            raise ValueError("indices must be sorted, distinct and 1-based")

    @property
    def is_empty(self) -> bool:
        return not self.indices

    @property
    def positions(self) -> np.ndarray:
        """0-based positions into the restricted vector."""
        return np.array(self.indices, dtype=int) - 1

    def apply(self, y_delta) -> float:
        """``W' y_delta(s)``; zero for the empty subset."""
        if self.is_empty:
            return 0.0
        return float(np.dot(self.weights, np.asarray(y_delta, dtype=float)[self.positions]))

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "weights": list(self.weights), "objective": self.objective}


def _blocks(omega):
    a = np.asarray(as_corr_matrix(omega))
    k = a.shape[0] - 1
    if k > MAX_RESTRICTED:
        raise ValueError(
            f"{k} restricted coordinates means 2^{k} subsets; at most {MAX_RESTRICTED} are supported. "
            "Drop restrictions that are unlikely to bind or group them."
        )
    return a[0, 1:], a[1:, 1:], k


def enumerate_subsets(omega):
    """Yield ``(subset, weights, objective)`` for every well-conditioned subset.

    Order is by cardinality, then lexicographic, which is also the tie order.
    Subsets whose block has smallest eigenvalue below 1e-10 are skipped with a
    warning.
    """
    r, big, k = _blocks(omega)
    yield (), np.empty(0), 0.0
    skipped = []
    for size in range(1, k + 1):
        for sub in itertools.combinations(range(k), size):
            idx = list(sub)
            block = big[np.ix_(idx, idx)]
            if np.linalg.eigvalsh(block)[0] < MIN_EIGENVALUE:
                skipped.append(tuple(i + 1 for i in sub))
                continue
            w = np.linalg.solve(block, r[idx])
            yield sub, w, float(r[idx] @ w)
    if skipped:
        warnings.warn(f"skipped near-singular subsets {skipped[:5]}{'...' if len(skipped) > 5 else ''}",
                      RuntimeWarning, stacklevel=2)


def _as_selection(sub, w, obj) -> SubsetSelection:
    return SubsetSelection(tuple(i + 1 for i in sub), tuple(w), obj)


def _best_by_sign(omega):
    best = {+1: ((), np.empty(0), 0.0), -1: ((), np.empty(0), 0.0)}
    for sub, w, obj in enumerate_subsets(omega):
        for sign in (+1, -1):
            if np.all(sign * w >= -SIGN_SLACK) and obj > best[sign][2] + TIE_TOL:
                best[sign] = (sub, w, obj)
    return _as_selection(*best[+1]), _as_selection(*best[-1])


def select_one_sided(omega) -> SubsetSelection:
    """Feasible subset (all weights >= 0) with the largest objective.

    ``omega`` is the correlation matrix of ``(Y_beta, Y_delta)``, beta first.
    """
    return _best_by_sign(omega)[0]


def select_two_sided(omega) -> tuple[SubsetSelection, SubsetSelection]:
    """``(s1, s2)``: best subsets with non-negative and non-positive weights."""
    return _best_by_sign(omega)


def _clip_to_s_bar(w12, w13, w23) -> TildeOmega:
    w12, w13 = min(max(w12, 0.0), OMEGA_CLIP), min(max(w13, 0.0), OMEGA_CLIP)
    if w12 == 0.0 or w13 == 0.0:
        return TildeOmega(w12, w13, 0.0)
    if s_bar_margin(w12, w13, w23) > 0.0:
        return TildeOmega(w12, w13, w23)
    centre = w12 * w13
    half = math.sqrt(w12 * w13 * (1 - w12) * (1 - w13))
    w23 = centre + math.copysign(half * (1 - 1e-9), w23 - centre)
    return TildeOmega(w12, w13, w23)


def tilde_omega_of(omega, s1: SubsetSelection, s2: SubsetSelection) -> TildeOmega:
    """``(w12, w13, w23)`` for a pair of selections.

    ``w23 = W1 Omega_{s1,s2} W2'``; empty subsets contribute zeros.  Values
    outside S-bar by rounding are pulled back inside, and ``w12, w13`` are
    capped at 0.999.
    """
    a = np.asarray(as_corr_matrix(omega))
    w23 = 0.0
    if not (s1.is_empty or s2.is_empty):
        cross = a[1:, 1:][np.ix_(s1.positions, s2.positions)]
        w23 = float(np.asarray(s1.weights) @ cross @ np.asarray(s2.weights))
    tw = _clip_to_s_bar(s1.objective, s2.objective, w23)
    assert in_s_bar(tw), tw
    return tw


def select_exact_one_sided(omega, level: Level, cfg: McConfig | None = None) -> SubsetSelection:
    """Feasible subset minimising the expected excess length at ``delta = 0``.

    The critical value for each distinct objective is solved by Monte Carlo.
    Agrees with :func:`select_one_sided` whenever the expected excess length
    decreases in the objective.
    """
    cfg = cfg or McConfig()
    scores: dict[float, float] = {}
    best, best_score = None, math.inf
    for sub, w, obj in enumerate_subsets(omega):
        if not np.all(w >= -SIGN_SLACK):
            continue
        w_clip = min(obj, OMEGA_CLIP)
        if w_clip not in scores:
            c = solve_c_one_sided(level, w_clip, cfg.derive("select", w_clip))
            scores[w_clip] = excess_length_one_sided(level, w_clip, c)
        if scores[w_clip] < best_score - TIE_TOL:
            best, best_score = (sub, w, obj), scores[w_clip]
    return _as_selection(*best)
