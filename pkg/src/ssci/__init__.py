"""Adaptive confidence intervals for a coefficient when nuisance coefficients have known signs."""

__version__ = "0.1.0"

from .ci import (  # noqa: E402
    EstimateBundle,
    IntervalOneSided,
    IntervalTwoSided,
    ci_from_estimates,
    ci_one_sided_lower,
    ci_one_sided_normal,
    ci_two_sided_normal,
)
from .critval import (  # noqa: E402
    CriticalValuePair,
    Level,
    solve_c_one_sided,
    solve_c_tilde,
    solve_cu_lower_bound,
    solve_cu_optimal,
)
from .gauss import CorrMatrix, DomainError, McConfig, TildeOmega, in_s_bar  # noqa: E402
from .regress import Dataset, FactorialDesign, RegressionSpec, SignRestrictedOLS, ols_fit  # noqa: E402
from .select import SubsetSelection, select_one_sided, select_two_sided, tilde_omega_of  # noqa: E402
from .surface import PolySurface, builtin_surface, eval_surface, fit_surface  # noqa: E402

__all__ = [
    "CorrMatrix",
    "CriticalValuePair",
    "Dataset",
    "DomainError",
    "EstimateBundle",
    "FactorialDesign",
    "IntervalOneSided",
    "IntervalTwoSided",
    "Level",
    "McConfig",
    "PolySurface",
    "RegressionSpec",
    "SignRestrictedOLS",
    "SubsetSelection",
    "TildeOmega",
    "builtin_surface",
    "ci_from_estimates",
    "ci_one_sided_lower",
    "ci_one_sided_normal",
    "ci_two_sided_normal",
    "eval_surface",
    "fit_surface",
    "in_s_bar",
    "ols_fit",
    "select_one_sided",
    "select_two_sided",
    "solve_c_one_sided",
    "solve_c_tilde",
    "solve_cu_lower_bound",
    "solve_cu_optimal",
    "tilde_omega_of",
]
