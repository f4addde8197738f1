import math

import numpy as np
import pytest

from oracles import origin_cu_lower, quad_c_one_sided
from ssci.critval import (
    CriticalValuePair,
    InfeasibleError,
    Level,
    SolverError,
    _TwoSidedProblem,
    bisect,
    bonferroni_c,
    c_ell_by_symmetry,
    coverage_one_sided,
    coverage_two_sided,
    excess_length_one_sided,
    solve_c_one_sided,
    solve_c_tilde,
    solve_cu_lower_bound,
    solve_cu_optimal,
)
from ssci.gauss import DomainError, McConfig

L05 = Level(0.05)
SMALL = McConfig(draws=500_000, seed=3)


def test_level_defaults_and_quantiles():
    lv = Level(0.05)
    assert lv.gamma == pytest.approx(0.005)
    assert lv.z_standard == pytest.approx(1.6449, abs=5e-5)
    assert lv.z_adaptive == pytest.approx(1.6954, abs=5e-5)
    assert lv.trunc == pytest.approx(2.0047, abs=5e-5)
    assert lv.z_gamma == pytest.approx(2.5758, abs=5e-5)
    assert lv.is_published and not Level(0.05, 0.01).is_published and not Level(0.2).is_published


@pytest.mark.parametrize("a, g", [(0.0, None), (0.05, 0.05), (0.05, 0.0), (0.6, None)])
def test_level_validation(a, g):
    with pytest.raises(ValueError):
        Level(a, g)


def test_bisect_requires_bracket():
    with pytest.raises(SolverError) as info:
        bisect(lambda x: x + 1, 0.0, 1.0)
    assert info.value.bracket == (0.0, 1.0)


def test_bisect_iteration_cap():
    with pytest.raises(SolverError):
        bisect(lambda x: x - 0.3, 0.0, 1.0, tol=0.0, maxiter=5)
    assert bisect(lambda x: x - 0.3, 0.0, 1.0, tol=1e-10) == pytest.approx(0.3, abs=1e-9)


def test_c_zero_is_analytic():
    c, info = solve_c_one_sided(L05, 0.0, full_output=True)
    assert c == L05.z_standard
    assert info["draws"] == 0


@pytest.mark.parametrize("omega", [0.1, 0.5])
def test_c_matches_quadrature(omega):
    c, info = solve_c_one_sided(L05, omega, McConfig(draws=8_000_000, seed=17), full_output=True)
    ref = quad_c_one_sided(0.05, 0.005, omega)
    assert abs(c - ref) <= 5e-3
    assert abs(c - ref) <= 4 * info["c_se"] + 1e-4


def test_c_range_near_one():
    c = solve_c_one_sided(L05, 0.999, SMALL)
    assert 0.0 <= c <= L05.z_gamma


def test_domain_errors():
    with pytest.raises(DomainError):
        solve_c_one_sided(L05, 1.0)
    with pytest.raises(DomainError):
        solve_cu_lower_bound(L05, (0.5, 0.5, 0.5), SMALL)


def test_coverage_origin_is_exact():
    est = coverage_one_sided(L05, 0.0, L05.z_standard, cfg=McConfig(20_000, 1))
    assert est.value == pytest.approx(0.95, abs=1e-12)


def test_coverage_at_solution_with_independent_seed():
    c = solve_c_one_sided(L05, 0.5, McConfig(seed=1))
    est = coverage_one_sided(L05, 0.5, c, cfg=McConfig(seed=2))
    assert abs(est.value - 0.95) <= 4 * est.se + 1e-4  # +1e-4 covers the bisection tolerance
    shifted = coverage_one_sided(L05, 0.5, c, delta_shift=10.0, cfg=McConfig(seed=3))
    assert abs(shifted.value - 0.955) <= 3 * shifted.se + 1e-6


def test_indicator_and_conditional_agree():
    a = coverage_one_sided(L05, 0.4, 1.7, 0.3, SMALL, "conditional")
    b = coverage_one_sided(L05, 0.4, 1.7, 0.3, SMALL, "indicator")
    assert abs(a.value - b.value) <= 4 * b.se
    assert a.se < b.se


@pytest.mark.parametrize("omega", [0.1, 0.5, 0.9])
def test_bonferroni_fallback_is_conservative(omega):
    est = coverage_one_sided(L05, omega, bonferroni_c(L05, omega), cfg=SMALL)
    assert est.value >= 0.95 - 3 * est.se


def test_excess_length_closed_form():
    omega, c, shift = 0.6, 1.4, 0.5
    w = np.random.default_rng(0).standard_normal(2_000_000) * math.sqrt(omega)
    mc = np.minimum(L05.z_adaptive, shift + w + c)
    assert excess_length_one_sided(L05, omega, c, shift) == pytest.approx(mc.mean(), abs=4 * mc.std() / 1400)
    assert excess_length_one_sided(L05, 0.0, 1.0) == 1.0


@pytest.mark.parametrize("alpha", [0.05, 0.01])
def test_cu_lower_origin_closed_form(alpha):
    lv = Level(alpha)
    assert solve_cu_lower_bound(lv, (0, 0, 0), SMALL) == pytest.approx(origin_cu_lower(alpha, alpha / 10), abs=5e-3)


def test_cu_lower_self_consistent():
    lv, tw = L05, (0.5, 0.5, 0.25)
    c = solve_cu_lower_bound(lv, tw, McConfig(seed=5))
    est = coverage_two_sided(lv, tw, math.inf, c, McConfig(seed=6), estimator="indicator")
    assert abs(est.value - 0.95) <= 3 * est.se


def test_c_tilde_with_saturated_upper_arm():
    tw = (0.3, 0.0, 0.0)
    c = solve_c_tilde(L05, math.inf, tw, SMALL)
    assert math.isfinite(c)
    est = coverage_two_sided(L05, tw, c, math.inf, McConfig(seed=9), estimator="indicator")
    assert abs(est.value - 0.95) <= 3 * est.se


def test_c_tilde_at_lower_bound_saturates():
    tw = (0.5, 0.5, 0.25)
    lo = solve_cu_lower_bound(L05, tw, SMALL)
    c = solve_c_tilde(L05, lo, tw, SMALL)
    assert math.isinf(c) or c > 5


def test_c_tilde_self_consistent():
    tw = (0.5, 0.5, 0.25)
    c = solve_c_tilde(L05, 2.2, tw, McConfig(seed=13))
    est = coverage_two_sided(L05, tw, c, 2.2, McConfig(seed=14), estimator="indicator")
    assert abs(est.value - 0.95) <= 3 * est.se


def test_c_tilde_infeasible_names_bound():
    with pytest.raises(InfeasibleError) as info:
        solve_c_tilde(L05, 0.5, (0.5, 0.5, 0.25), SMALL)
    assert info.value.c_u_lower == pytest.approx(solve_cu_lower_bound(L05, (0.5, 0.5, 0.25), SMALL))
    assert "c_u_lower" in str(info.value)


def test_cu_optimal_dominates_grid():
    tw = (0.5, 0.5, 0.25)
    pair = solve_cu_optimal(L05, tw, SMALL)
    prob = _TwoSidedProblem(L05, tw, SMALL)
    best = prob.objective(pair.c_upper)[0]
    for cu in np.linspace(prob.cu_lower, prob.t + 6, 21):
        assert best <= prob.objective(float(cu))[0] + 1e-12


def test_cu_optimal_common_random_numbers():
    a = solve_cu_optimal(L05, (0.4, 0.2, 0.05), SMALL)
    b = solve_cu_optimal(L05, (0.4, 0.2, 0.05), SMALL)
    assert a == b
    assert isinstance(a, CriticalValuePair) and a.method == "exact_mc"


def test_c_ell_by_symmetry_definitional():
    cfg = McConfig(draws=200_000, seed=4)
    assert c_ell_by_symmetry(L05, (0.3, 0.5, 0.2), cfg) == solve_cu_optimal(L05, (0.5, 0.3, 0.2), cfg).c_upper


def test_c_ell_by_symmetry_cross_check():
    tw = (0.5, 0.5, 0.25)
    direct = solve_cu_optimal(L05, tw, McConfig(seed=21)).c_lower
    assert abs(c_ell_by_symmetry(L05, tw, McConfig(seed=22)) - direct) <= 0.02


def test_c_ell_by_symmetry_domain():
    with pytest.raises(DomainError):
        c_ell_by_symmetry(L05, (0.5, 0.5, 0.5), SMALL)


def test_pair_serialises_infinity():
    d = CriticalValuePair(math.inf, 1.9, 2.0, "exact_mc").to_dict()
    assert d["c_lower"] == "inf" and d["c_upper"] == 1.9
