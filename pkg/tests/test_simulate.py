import dataclasses

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from conftest import SMALL_VARS, fitted_bundle, random_corr
from scengen.errors import DataError, NumericalError
from scengen.gaussianize import to_scores
from scengen.glasso import GraphicalModel, kron_covariance
from scengen.simulate import (ScenarioBatch, band, coverage_report, sample_kronecker_gaussian, scenario_rng,
                              scenarios, standard_normals)
from scengen.synthetic import default_truth
from scengen.tails import NormalMarginal

T_ISSUE = pd.Timestamp("2018-07-01T00:00Z")


def model(A, B, scale=1.0):
    return GraphicalModel(np.linalg.inv(A), A, np.linalg.inv(B), B, scale=scale,
                          variables=[("load", str(i)) for i in range(len(A))], lags=list(range(len(B))))


@pytest.fixture(scope="module")
def bundle():
    b, _ = fitted_bundle(default_truth(variables=SMALL_VARS, n_lags=6), n=1200, seed=1)
    return b


def flat_cov(X):
    M = X.shape[0]
    F = X.reshape(M, -1)
    return F.T @ F / M  # known zero mean


# --- Kronecker sampling -----------------------------------------------------

def test_identity_factors_give_identity_covariance():
    X = sample_kronecker_gaussian(model(np.eye(3), np.eye(4)), 100_000, seed=3)
    assert np.abs(flat_cov(X) - np.eye(12)).max() <= 0.02


def test_law_matches_kron_covariance():
    rng = np.random.default_rng(5)
    m = model(random_corr(rng, 3, cond=5), random_corr(rng, 4, cond=5), scale=1.0)
    X = sample_kronecker_gaussian(m, 100_000, seed=4)
    assert np.abs(flat_cov(X) - kron_covariance(m)).max() <= 0.02


def test_same_seed_same_draws_and_prefix_stable():
    m = model(np.eye(2), np.eye(3))
    a = sample_kronecker_gaussian(m, 50, seed=9)
    np.testing.assert_array_equal(a, sample_kronecker_gaussian(m, 50, seed=9))
    # scenario i depends only on (seed, i)
    np.testing.assert_array_equal(a[:10], sample_kronecker_gaussian(m, 10, seed=9))
    assert not np.array_equal(a, sample_kronecker_gaussian(m, 50, seed=10))


def test_streams_are_philox():
    g = scenario_rng(7, 3)
    assert isinstance(g.bit_generator, np.random.Philox)
    np.testing.assert_array_equal(standard_normals(7, 4, (2,))[3], scenario_rng(7, 3).standard_normal(2))


def test_non_pd_factor_raises():
    bad = model(np.eye(2), np.eye(2))
    bad.spatial_cov = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NumericalError, match="spatial"):
        sample_kronecker_gaussian(bad, 5, 0)


# --- full scenarios ---------------------------------------------------------

def test_scenarios_shape_and_finiteness(bundle):
    fc = np.full((4, 6), 1000.0)
    batch = scenarios(bundle, fc, T_ISSUE, M=1000, seed=42)
    assert batch.scenarios.shape == (1000, 4, 6)
    assert np.isfinite(batch.scenarios).all()
    b2 = scenarios(bundle, fc, T_ISSUE, M=1000, seed=42)
    assert batch.scenarios.tobytes() == b2.scenarios.tobytes()


def test_zero_noise_limit(bundle):
    Z, L = 4, 6
    flat = dataclasses.replace(bundle, marginals=[[NormalMarginal(0.0, 1.0)] * L for _ in range(Z)],
                               graph=dataclasses.replace(bundle.graph, scale=1e-24))
    fc = np.arange(Z * L, dtype=float).reshape(Z, L)
    batch = scenarios(flat, fc, T_ISSUE, M=20, seed=0)
    expect = fc + bundle.seasonal.evaluate([T_ISSUE])[0]
    assert np.abs(batch.scenarios - expect).max() < 1e-9


def test_median_matches_copula_model(bundle):
    M = 50_000
    fc = np.zeros((4, 6))
    batch = scenarios(bundle, fc, T_ISSUE, M=M, seed=1)
    seas = bundle.seasonal.evaluate([T_ISSUE])[0]
    med = np.median(batch.scenarios, axis=0) - seas
    sd = np.sqrt(bundle.graph.scale)
    for z in range(4):
        for l in range(6):
            # in score space the sample median of N(0, sd^2) has sd 1.2533 * sd / sqrt(M)
            s = to_scores(med[z, l], bundle.marginals[z][l])
            assert abs(s) <= 4 * 1.2533 * sd / np.sqrt(M)


def test_monotone_reconstruction(bundle):
    fc = np.zeros((4, 6))
    scores = sample_kronecker_gaussian(bundle.graph, 500, seed=2)
    batch = scenarios(bundle, fc, T_ISSUE, M=500, seed=2)
    for z, l in [(0, 0), (2, 5), (3, 3)]:
        assert np.array_equal(np.argsort(scores[:, z, l], kind="stable"),
                              np.argsort(batch.scenarios[:, z, l], kind="stable"))


def test_variable_order_mismatch(bundle):
    g = dataclasses.replace(bundle.graph, variables=list(reversed(bundle.graph.variables)))
    with pytest.raises(DataError, match="order"):
        scenarios(dataclasses.replace(bundle, graph=g), np.zeros((4, 6)), T_ISSUE, M=10)
    with pytest.raises(DataError, match="shape"):
        scenarios(bundle, np.zeros((3, 6)), T_ISSUE, M=10)


def test_scenario_csv(tmp_path, bundle):
    batch = scenarios(bundle, np.zeros((4, 6)), T_ISSUE, M=3, seed=0)
    batch.to_csv(tmp_path / "s.csv")
    df = pd.read_csv(tmp_path / "s.csv")
    assert list(df.columns) == ["scenario_id", "variable", "zone", "lag", "value"]
    assert len(df) == 3 * 4 * 6
    row = df.iloc[7]
    z = [i for i, v in enumerate(bundle.variables) if v == (row.variable, row.zone)][0]
    assert row.value == batch.scenarios[row.scenario_id, z, row.lag]


# --- bands and coverage -----------------------------------------------------

def test_trim_zero_is_min_max():
    X = np.random.default_rng(0).standard_normal((30, 2, 3))
    b = band(X, 0.0)
    np.testing.assert_array_equal(b.lower, X.min(axis=0))
    np.testing.assert_array_equal(b.upper, X.max(axis=0))


def test_equal_scenarios_collapse():
    b = band(np.full((40, 1, 2), 3.0), 0.05)
    np.testing.assert_array_equal(b.lower, b.upper)


def test_standard_normal_band():
    X = standard_normals(0, 10_000, (1, 24))
    b = band(X, 0.05)
    assert np.abs(b.lower + 1.645).max() <= 0.05 and np.abs(b.upper - 1.645).max() <= 0.05


def test_standard_normal_band_many_coordinates():
    # sampling sd of the 5% quantile at M = 10,000 is about 0.021
    X = np.random.default_rng(1).standard_normal((10_000, 3, 24))
    b = band(X, 0.05)
    assert np.abs(b.lower + 1.645).max() <= 4.5 * 0.0212
    assert abs(np.mean(b.lower) + 1.645) <= 0.01 and abs(np.mean(b.upper) - 1.645) <= 0.01


def test_band_is_type7_quantile_and_holds_middle_fraction():
    X = np.random.default_rng(2).standard_normal((1000, 2, 2))
    b = band(X, 0.05)
    # type 7: h = (M - 1) p, interpolate between order statistics h and h + 1
    s = np.sort(X[:, 0, 1])
    h = 999 * 0.05
    lo = s[int(h)] + (h - int(h)) * (s[int(h) + 1] - s[int(h)])
    assert b.lower[0, 1] == pytest.approx(lo, abs=1e-12)
    inside = ((X >= b.lower) & (X <= b.upper)).mean(axis=0)
    assert np.all(np.abs(inside - 0.9) <= 2 / 1000)
    assert np.all(b.lower <= b.upper)


@settings(max_examples=30, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(0.005, 0.45)), st.one_of(st.just(0.0), st.floats(0.005, 0.45)))
def test_band_nesting(t1, t2):
    t1, t2 = sorted((t1, t2))
    X = np.random.default_rng(3).standard_normal((200, 2, 3))
    b1, b2 = band(X, t1), band(X, t2)
    assert np.all(b1.lower <= b2.lower) and np.all(b2.upper <= b1.upper)


def test_band_errors():
    X = np.zeros((10, 1, 1))
    with pytest.raises(ValueError, match="too few"):
        band(X, 0.05)
    with pytest.raises(ValueError):
        band(X, 0.5)


def test_coverage_trivial_cases(tmp_path):
    X = np.random.default_rng(4).standard_normal((100, 2, 3))
    b = band(X, 0.05)
    assert coverage_report(b, b.upper + 10).fraction == 0.0
    mid = np.median(X, axis=0)
    rep = coverage_report(X, mid, trim=0.05)
    assert rep.fraction == 1.0
    rep.to_csv(tmp_path / "c.csv", mid)
    assert (tmp_path / "c.csv").read_text().startswith("variable,zone,lag,actual,lower,upper,inside\n")
    with pytest.raises(DataError):
        coverage_report(b, np.full((2, 3), np.nan))
    with pytest.raises(DataError):
        coverage_report(b, np.zeros((3, 3)))


def test_band_csv(tmp_path, bundle):
    batch = scenarios(bundle, np.zeros((4, 6)), T_ISSUE, M=40, seed=0)
    band(batch).to_csv(tmp_path / "b.csv")
    df = pd.read_csv(tmp_path / "b.csv")
    assert list(df.columns) == ["variable", "zone", "lag", "lower", "upper"]
    assert len(df) == 4 * 6 and (df.lower <= df.upper).all()


def test_self_generated_coverage():
    truth = default_truth(variables=SMALL_VARS, n_lags=6)
    b, _ = fitted_bundle(truth, n=1500, seed=5, periods=(24,))
    from scengen.synthetic import sample_deviations
    times = pd.date_range("2018-04-01", periods=30, freq="7h", tz="UTC")
    devs = sample_deviations(truth, times, seed=99)
    fracs = []
    for k, t in enumerate(times):
        batch = scenarios(b, np.zeros((4, 6)), t, M=400, seed=k)
        fracs.append(coverage_report(batch, devs[k], trim=0.05).fraction)
    assert np.mean(fracs) >= 0.8
