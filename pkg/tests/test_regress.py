import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from ssci.regress import (
    CSVParseError,
    CollinearityError,
    Dataset,
    FactorialDesign,
    RegressionSpec,
    SignRestrictedOLS,
    factorial_design,
    ingest_csv,
    ols_fit,
    robust_covariance,
    write_csv,
)

R = 1 / math.sqrt(2)
INTERACTION_CORR = np.array([[1, 0.5, -R], [0.5, 1, -R], [-R, -R, 1]])
BOTH_CORR = np.array([[1, 0.5, 0.5], [0.5, 1, 0.5], [0.5, 0.5, 1]])


def simulated(n, seed, hetero=False):
    rng = np.random.default_rng(seed)
    z, x, w = rng.normal(size=(3, n))
    noise = rng.normal(size=n) * (1 + np.abs(z) if hetero else 1.0)
    return Dataset({"y": 2 * z + x + 0.5 * w + noise, "z": z, "x": x, "w": w})


def corr(cov):
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def balanced_factorial(n, seed):
    rng = np.random.default_rng(seed)
    t1, t2 = rng.integers(0, 2, (2, n)).astype(float)
    return Dataset({"y": 0.3 * t1 + rng.normal(size=n), "T1": t1, "T2": t2})


def test_intercept_only_constant():
    res = ols_fit(Dataset({"y": np.full(30, 2.5)}), RegressionSpec("y", "const"))
    assert res.coef[0] == pytest.approx(2.5, abs=1e-14)
    assert np.allclose(res.residuals, 0.0, atol=1e-13)
    assert res.cov[0, 0] == pytest.approx(0.0, abs=1e-24)


def test_consistency():
    res = ols_fit(simulated(10_000, 1), RegressionSpec("y", "z", ("x",), ("w",)))
    p = res.params()
    assert p["z"] == pytest.approx(2.0, abs=0.05)
    assert p["x"] == pytest.approx(1.0, abs=0.05)
    assert res.names == ("const", "z", "x", "w")


def test_hc_close_to_classical_when_homoskedastic():
    data = simulated(20_000, 2)
    res = ols_fit(data, RegressionSpec("y", "z", ("x",), ("w",)))
    X = np.column_stack([np.ones(data.n), data["z"], data["x"], data["w"]])
    s2 = res.residuals @ res.residuals / (data.n - 4)
    classical = s2 * np.linalg.inv(X.T @ X / data.n)
    d = np.diag(classical)
    assert np.allclose(np.diag(res.cov), d, rtol=0.10)
    assert np.all(np.abs(res.cov - classical) <= 0.10 * np.sqrt(np.outer(d, d)))


def test_hc0_hc1_ratio():
    data = simulated(200, 3, hetero=True)
    spec = RegressionSpec("y", "z", ("x",))
    h0, h1 = ols_fit(data, spec, "HC0"), ols_fit(data, spec, "HC1")
    assert np.allclose(h1.cov, h0.cov * 200 / 197, rtol=1e-12)
    with pytest.raises(ValueError, match="cov_type"):
        ols_fit(data, spec, "HC3")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(20, 300))
def test_residual_orthogonality_and_psd(seed, n):
    data = simulated(n, seed, hetero=True)
    res = ols_fit(data, RegressionSpec("y", "z", ("x",), ("w",)))
    X = np.column_stack([np.ones(n), data["z"], data["x"], data["w"]])
    scale = np.abs(X).T @ np.abs(data["y"])
    assert np.all(np.abs(X.T @ res.residuals) <= 1e-8 * scale)
    assert np.linalg.eigvalsh(res.cov).min() >= -1e-10
    assert np.allclose(res.cov, res.cov.T)


def test_collinearity_names_columns():
    data = simulated(100, 4)
    data = data.with_columns(x2=2 * data["x"] - data["w"])
    with pytest.raises(CollinearityError) as err:
        ols_fit(data, RegressionSpec("y", "z", ("x",), ("w", "x2")))
    assert set(err.value.columns) & {"x", "w", "x2"}
    assert "collinear" in str(err.value)


def test_too_few_rows():
    with pytest.raises(ValueError, match="more rows"):
        ols_fit(simulated(3, 0), RegressionSpec("y", "z", ("x",), ("w",)))


def test_duplicate_regressors():
    with pytest.raises(ValueError, match="distinct"):
        RegressionSpec("y", "z", ("z",))


def test_factorial_rows():
    d = Dataset({"T1": [1.0, 1.0, 0.0, 0.0], "T2": [1.0, 0.0, 1.0, 0.0]})
    both = factorial_design(d, "both")
    assert [both["T"][0], both["C"][0], both["B"][0]] == [0.0, 0.0, 1.0]
    inter = factorial_design(d, "interaction")
    assert list(inter["I"]) == [1.0, 0.0, 0.0, 0.0]
    assert list(inter["T"]) == [1.0, 1.0, 0.0, 0.0]
    with pytest.raises(ValueError, match="0/1"):
        factorial_design(Dataset({"T1": [2.0], "T2": [0.0]}))


@pytest.mark.parametrize("param, target", [("interaction", INTERACTION_CORR), ("both", BOTH_CORR)])
def test_factorial_correlations(param, target):
    data = factorial_design(balanced_factorial(20_000, 5), param)
    third = "I" if param == "interaction" else "B"
    res = ols_fit(data, RegressionSpec("y", "T", ("C", third)))
    assert np.max(np.abs(corr(res.cov[1:, 1:]) - target)) <= 0.05


def test_reparameterization_identity():
    base = balanced_factorial(500, 6)
    a = ols_fit(factorial_design(base, "interaction"), RegressionSpec("y", "T", ("C", "I"))).params()
    b = ols_fit(factorial_design(base, "both"), RegressionSpec("y", "T", ("C", "B"))).params()
    assert b["B"] == pytest.approx(a["I"] + a["T"] + a["C"], abs=1e-10)
    assert b["T"] == pytest.approx(a["T"], abs=1e-10)


def test_bundle_extracts_block():
    res = ols_fit(simulated(300, 7), RegressionSpec("y", "z", ("x",), ("w",)))
    bun = res.bundle({"x": 1.0})
    assert bun.b_hat == res.coef[1] and bun.d_hat[0] == res.coef[2] + 1.0
    assert np.array_equal(bun.sigma_hat, res.cov[1:3, 1:3]) and bun.names == ("z", "x")


def test_ingest_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# comment\ny,T1,x\n1.5,0,2\n2.5,1,3\n-1,1,4e-3\n")
    d = ingest_csv(p, "y,T1:binary,x")
    assert d.n == 3 and d.names == ["y", "T1", "x"] and d["x"][2] == 0.004
    assert ingest_csv(p).n == 3


def test_ingest_blank_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,x\n1,2\n,3\n4,5\n")
    with pytest.warns(UserWarning, match="dropped 1 row"):
        d = ingest_csv(p)
    assert d.n == 2


def test_ingest_parse_error_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,x\n1,2\n3,abc\n")
    with pytest.raises(CSVParseError) as err:
        ingest_csv(p)
    assert err.value.row == 2 and err.value.column == "x"
    p.write_text("y,T1\n1,2\n")
    with pytest.raises(CSVParseError, match="0 or 1"):
        ingest_csv(p, ["y", "T1:binary"])
    p.write_text("y\n")
    with pytest.raises(ValueError, match="lacks"):
        ingest_csv(p, ["y", "x"])


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    d = Dataset({"a": rng.normal(size=50) * 1e5, "b": rng.uniform(size=50) * 1e-7})
    write_csv(d, tmp_path / "r.csv", ["made by test"])
    back = ingest_csv(tmp_path / "r.csv")
    for name in d.names:
        assert np.allclose(back[name], d[name], rtol=1e-12, atol=0)


def test_robust_covariance_direct():
    X = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
    e = np.array([1.0, -1.0, -1.0, 1.0])
    bread = np.linalg.inv(X.T @ X / 4)
    meat = (X * e[:, None]).T @ (X * e[:, None]) / 4
    assert np.allclose(robust_covariance(X, e, "HC0"), bread @ meat @ bread)


def test_sklearn_transformer():
    X = np.array([[1, 1], [1, 0], [0, 1], [0, 0]], dtype=float)
    out = FactorialDesign("both").fit_transform(X)
    assert out.tolist()[0] == [1, 0, 0, 1]
    assert list(FactorialDesign("interaction").fit(X).get_feature_names_out()) == ["const", "T", "C", "I"]


def test_sklearn_regressor():
    data = simulated(2_000, 9)
    X = np.column_stack([data["z"], data["x"], data["w"]])
    est = SignRestrictedOLS(interest=0, restricted=(1,), side="two_sided")
    fitted = clone(est).fit(X, data["y"])
    assert fitted.coef_[0] == pytest.approx(2.0, abs=0.1)
    assert fitted.interval_.lower < fitted.coef_[0] < fitted.interval_.upper
    assert fitted.predict(X[:3]).shape == (3,)
    assert fitted.score(X, data["y"]) > 0.5
    assert est.get_params()["cov_type"] == "HC1"
