import math

import numpy as np
import pytest
from scipy.stats import norm

from ssci.critval import Level
from ssci.gauss import McConfig, in_s_bar
from ssci.regress import ingest_csv
from ssci.studies import (
    BootstrapTable,
    bootstrap_study,
    coverage_scan,
    default_delta_grid,
    excess_length_curve_delta,
    excess_length_curve_omega,
    expected_length_surface,
    load_synthetic_factorial,
    make_synthetic_factorial,
    scan_grid,
    w23_levels,
    worker_count,
)

L = Level(0.05)
CFG = McConfig(draws=500_000, seed=5)


@pytest.fixture(scope="module")
def fig1():
    return excess_length_curve_omega(L, np.round(np.arange(0, 1, 0.1), 2), CFG)


def test_fig1_endpoints(fig1):
    assert fig1.curves["adaptive"][0] == pytest.approx(1.6449, abs=1e-3)
    assert fig1.curves["adaptive"][7] <= 0.7 * norm.ppf(0.95)
    assert np.all(fig1.curves["standard"] == L.z_standard)
    assert fig1.curves["optimal_at_zero"] == pytest.approx(np.sqrt(1 - fig1.x) * L.z_standard)
    assert np.all(fig1.curves["adaptive"] >= fig1.curves["optimal_at_zero"] - 3 * fig1.se["adaptive"])


def test_fig1_nonincreasing(fig1):
    e, s = fig1.curves["adaptive"], fig1.se["adaptive"]
    assert np.all(np.diff(e) <= 3 * np.hypot(s[1:], s[:-1]))


def test_fig1_csv(fig1, tmp_path):
    fig1.to_csv(tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text()
    assert "# seed = 5" in text and "# draws = 500000" in text
    back = ingest_csv(tmp_path / "f.csv")
    assert back.names == ["omega", "adaptive", "adaptive_se", "standard", "standard_se",
                          "optimal_at_zero", "optimal_at_zero_se"]
    assert np.allclose(back["adaptive"], fig1.curves["adaptive"], rtol=1e-12)


@pytest.mark.parametrize("omega", [0.3, 0.5, 0.9])
def test_fig2_claims(omega):
    cur = excess_length_curve_delta(L, omega, cfg=CFG)
    a, s = cur.curves["adaptive"], cur.se["adaptive"]
    assert a[0] < L.z_standard - 3 * s[0]
    assert cur.x[-1] == 50.0 and a[-1] <= L.z_adaptive
    assert np.ptp(cur.curves["standard"]) == 0.0
    rho = math.sqrt(omega)
    assert cur.curves["optimal_at_zero"] == pytest.approx(rho * cur.x + math.sqrt(1 - omega) * L.z_standard)


def test_delta_grid():
    g = default_delta_grid()
    assert g[0] == 0 and g[32] == 8 and g[-1] == 50 and len(g) == 34
    with pytest.raises(ValueError):
        excess_length_curve_delta(L, 0.5, [-1.0, 0.0], CFG)


def test_fig3_origin_and_w23_spread():
    surf = expected_length_surface(L, [(0.0, 0.0)], CFG)
    assert surf.length[0] == pytest.approx(2 * norm.ppf(0.975), abs=2e-3)
    spread = expected_length_surface(L, [(0.4, 0.6)], McConfig(draws=200_000, seed=6),
                                     w23_fractions=(-0.8, 0.0, 0.8))
    assert len(spread.points) == 3 and spread.spread() <= 0.05


def test_w23_levels():
    assert w23_levels(0.0, 0.5, (-0.9, 0.9)) == [0.0]
    lv = w23_levels(0.3, 0.6, (-0.9, 0.0, 0.9))
    assert lv[1] == pytest.approx(0.18) and all(in_s_bar((0.3, 0.6, z)) for z in lv)
    with pytest.raises(ValueError, match="S-bar"):
        expected_length_surface(L, [(0.5, 0.5, 0.9)], CFG)


def test_scan_grid_shapes():
    assert len(scan_grid("one", 0.01)) == 100
    g = scan_grid("two", 0.1)
    assert np.all(g[:, 0] <= g[:, 1]) and all(in_s_bar(p) for p in g)


def test_one_sided_scan_alpha01():
    scan = coverage_scan(Level(0.01), "one", cfg=McConfig(draws=1_000_000, seed=0), step=0.01)
    assert 0.9874 <= scan.min <= 0.9914
    assert np.all((scan.coverage >= 0) & (scan.coverage <= 1))


@pytest.mark.slow
def test_two_sided_scan_alpha10():
    # coarser step than the acceptance scan; the minimum sits in a broad region
    scan = coverage_scan(Level(0.1), "two", cfg=McConfig(draws=500_000, seed=0), step=0.05)
    assert 0.893 <= scan.min <= 0.899


def test_scan_rejects_side():
    with pytest.raises(ValueError):
        coverage_scan(L, "three")


def test_bootstrap_smoke(tmp_path):
    data = make_synthetic_factorial(400, seed=3)
    tab = bootstrap_study(data, L, reps=100, cfg=McConfig(seed=2), controls=("x1",))
    assert [r["coefficient"] for r in tab.rows] == ["T", "C", "B", "I"]
    again = bootstrap_study(data, L, reps=100, cfg=McConfig(seed=2), controls=("x1",))
    assert tab.rows == again.rows
    tab.to_csv(tmp_path / "b.csv")
    back = ingest_csv(tmp_path / "b.csv", ["cp_ssci", "ratio"])
    assert back.n == 4
    assert list(BootstrapTable.COLUMNS) == (tmp_path / "b.csv").read_text().splitlines()[
        len(tab.meta)].split(",")
    with pytest.raises(ValueError, match="100"):
        bootstrap_study(data, L, reps=99)


def test_bootstrap_zero_recenter():
    data = make_synthetic_factorial(400, seed=3)
    tab = bootstrap_study(data, L, reps=100, recenter={"C": "zero", "T": 0.1}, cfg=McConfig(seed=2))
    assert tab.row("C")["truth"] == 0.0
    assert "T:0.1" in tab.meta["recenter"]


def test_bundled_dataset_matches_generator():
    d = load_synthetic_factorial()
    g = make_synthetic_factorial()
    assert d.n == 947
    for name in g.names:
        assert np.array_equal(d[name], g[name])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("SSCI_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("SSCI_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()


def test_parallel_matches_serial(monkeypatch):
    grid = [0.2, 0.6]
    cfg = McConfig(draws=100_000, seed=1)
    serial = excess_length_curve_omega(L, grid, cfg)
    monkeypatch.setenv("SSCI_THREADS", "2")
    par = excess_length_curve_omega(L, grid, cfg)
    assert np.array_equal(serial.curves["adaptive"], par.curves["adaptive"])
