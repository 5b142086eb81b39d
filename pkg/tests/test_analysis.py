import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swingid.analysis import (
    covariance_scaling,
    empirical_estimator_covariance,
    error_metrics,
    histogram_edges,
    predicted_covariance,
    relative_errors,
    run_monte_carlo,
    trial_seed,
)
from swingid.dynamics import GeneratorParams, Trajectory, simulate
from swingid.errors import DimensionMismatch, InvalidParameters, NotPSD, RankDeficient, ZeroTruth
from swingid.estimators import EstimationResult, build_data_matrix

from conftest import random_system


def result(m, d=None):
    m = np.asarray(m, dtype=float)
    return EstimationResult(m, np.ones_like(m) if d is None else np.asarray(d, dtype=float), "test")


def test_error_metrics_zero():
    truth = GeneratorParams([0.2, 0.3], [1.0, 1.0])
    assert error_metrics(result([0.2, 0.3]), truth) == (0.0, 0.0)


def test_error_metrics_example():
    truth = GeneratorParams([0.0, 2.0], [1.0, 1.0])
    assert error_metrics(result([1.0, 1.0]), truth)[0] == 1.0


@pytest.mark.parametrize("c", [-0.3, 0.01, 2.0])
def test_error_metrics_constant_offset(c):
    m = np.array([0.5, 1.0, 1.5, 2.0])
    e, d = error_metrics(result(m + c, np.ones(4) + c), GeneratorParams(m, np.ones(4)))
    assert e == pytest.approx(c * c, rel=1e-12)
    assert d == pytest.approx(c * c, rel=1e-12)


def test_error_metrics_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        error_metrics(result([1.0]), GeneratorParams([1.0, 1.0], [1.0, 1.0]))


def test_relative_errors():
    truth = GeneratorParams([0.2228, 0.0019], [1.0, 1.0])
    np.testing.assert_array_equal(relative_errors(result([0.2228, 0.0019]), truth), [0.0, 0.0])
    rel = relative_errors(result([0.2228, -0.0008]), truth)
    assert rel[1] == pytest.approx(-1.421052631578947, rel=1e-12)
    assert rel[1] < 0


def test_relative_errors_zero_truth():
    truth = GeneratorParams([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])
    with pytest.raises(ZeroTruth) as info:
        relative_errors(result([0.1, 1.1, 0.0]), truth)
    assert info.value.nodes == (1, 3)
    rel = relative_errors(result([0.1, 1.1, 0.0]), truth, skip_zero=True)
    assert np.isnan(rel[0]) and np.isnan(rel[2])
    assert rel[1] == pytest.approx(0.1)


@pytest.fixture
def small_pair(rng):
    sys_ = random_system(rng, 2, sigma=0.05)
    traj = simulate(sys_, rng.normal(size=2) * 0.1, steps=40, seed=3)
    return build_data_matrix(traj, sys_.laplacian)


def test_predicted_covariance_zero(small_pair):
    np.testing.assert_array_equal(predicted_covariance(small_pair, 0.0, 0.1), np.zeros((4, 4)))


def test_predicted_covariance_scales_with_sigma_squared(small_pair):
    rows = small_pair.w.shape[0]
    a = predicted_covariance(small_pair, 0.01**2 * np.eye(rows), 0.1)
    b = predicted_covariance(small_pair, 0.02**2 * np.eye(rows), 0.1)
    np.testing.assert_allclose(b, 4 * a, rtol=1e-12)


def test_predicted_covariance_forms_agree(small_pair, rng):
    rows = small_pair.w.shape[0]
    diag = rng.uniform(0.1, 1.0, rows)
    np.testing.assert_allclose(
        predicted_covariance(small_pair, diag, 0.1), predicted_covariance(small_pair, np.diag(diag), 0.1), rtol=1e-12
    )
    np.testing.assert_allclose(
        predicted_covariance(small_pair, 0.3, 0.1), predicted_covariance(small_pair, 0.3 * np.eye(rows), 0.1), rtol=1e-12
    )


def test_predicted_covariance_block_structure(small_pair, rng):
    diag = rng.uniform(0.1, 1.0, small_pair.w.shape[0])
    cov = predicted_covariance(small_pair, diag, 0.1)
    n = 2
    for bi in range(2):
        for bj in range(2):
            block = cov[bi * n : (bi + 1) * n, bj * n : (bj + 1) * n]
            off = block - np.diag(np.diag(block))
            assert np.max(np.abs(off)) <= 1e-12 * np.max(np.abs(cov))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rank=st.integers(0, 12))
def test_predicted_covariance_psd(seed, rank):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng, 2, sigma=0.05)
    pair = build_data_matrix(simulate(sys_, rng.normal(size=2), steps=7, seed=seed), sys_.laplacian)
    rows = pair.w.shape[0]
    factor = rng.normal(size=(rows, rank))
    cov = predicted_covariance(pair, factor @ factor.T, sys_.ts)
    assert np.array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov)[0] >= -1e-10 * max(np.trace(cov), 1e-300)


def test_predicted_covariance_rejects_bad_input(small_pair):
    rows = small_pair.w.shape[0]
    bad = np.eye(rows)
    bad[0, 0] = -1.0
    with pytest.raises(NotPSD):
        predicted_covariance(small_pair, bad, 0.1)
    skew = np.eye(rows)
    skew[0, 1] = 0.5
    with pytest.raises(NotPSD):
        predicted_covariance(small_pair, skew, 0.1)
    with pytest.raises(NotPSD):
        predicted_covariance(small_pair, -1.0, 0.1)
    with pytest.raises(DimensionMismatch):
        predicted_covariance(small_pair, np.eye(3), 0.1)


def test_predicted_covariance_rank_deficient(path3):
    traj = Trajectory(np.zeros((5, 3)), np.zeros((5, 3)), np.zeros((4, 3)), 0.1)
    with pytest.raises(RankDeficient):
        predicted_covariance(build_data_matrix(traj, path3), 1.0, 0.1)


def test_trial_seed():
    assert trial_seed(1, 50, 0) == trial_seed(1, 50, 0)
    seeds = {trial_seed(1, t, i) for t in (50, 100) for i in range(50)}
    assert len(seeds) == 100
    assert trial_seed(1, 50, 0) != trial_seed(2, 50, 0)
    # Pinned: SeedSequence output is part of numpy's stability guarantee.
    assert trial_seed(7, 400, 3) == 8866108535306248783


def test_empirical_covariance_noiseless(three_node_config):
    est = empirical_estimator_covariance(three_node_config.replace(sigma=0.0), 5, 1)
    np.testing.assert_allclose(est.cov, 0.0, atol=1e-20)
    np.testing.assert_allclose(est.mean[:3], three_node_config.params.m, rtol=1e-8)
    assert est.failed == 0


def test_empirical_covariance_needs_two_trials(three_node_config):
    with pytest.raises(InvalidParameters):
        empirical_estimator_covariance(three_node_config, 1, 1)


def test_covariance_scaling_exact_doubling(rng):
    a = rng.normal(size=(200, 3))
    diff, se = covariance_scaling(a, 2 * a, paired=True, n_boot=50)
    np.testing.assert_allclose(diff, 0.0, atol=1e-12)
    np.testing.assert_allclose(se, 0.0, atol=1e-12)
    diff, se = covariance_scaling(a, 2 * a, n_boot=50)
    assert np.all(se > 0)


def test_monte_carlo_noiseless(three_node_config):
    report = run_monte_carlo(three_node_config.replace(sigma=0.0), [50, 100], 1, 0)
    np.testing.assert_allclose(report.e_int_mean, 0.0, atol=1e-20)
    np.testing.assert_allclose(report.d_int_mean, 0.0, atol=1e-20)
    np.testing.assert_array_equal(report.e_int_std, 0.0)
    assert report.failures.tolist() == [0, 0]


def test_monte_carlo_reproducible(three_node_config):
    a = run_monte_carlo(three_node_config, [50, 100], 8, 3)
    b = run_monte_carlo(three_node_config, [50, 100], 8, 3)
    assert a.m_errors.tobytes() == b.m_errors.tobytes()
    assert a.e_int_mean.tobytes() == b.e_int_mean.tobytes()
    assert a.config_fingerprint == three_node_config.fingerprint
    assert a.master_seed == 3


def test_monte_carlo_grid_extension_keeps_trials(three_node_config):
    a = run_monte_carlo(three_node_config, [100], 5, 3)
    b = run_monte_carlo(three_node_config, [50, 100], 5, 3)
    np.testing.assert_array_equal(a.m_errors[0], b.m_errors[1])


def test_monte_carlo_workers_match_serial(three_node_config):
    a = run_monte_carlo(three_node_config, [60], 6, 2)
    b = run_monte_carlo(three_node_config, [60], 6, 2, workers=2)
    assert a.m_errors.tobytes() == b.m_errors.tobytes()


def test_monte_carlo_counts_failures(three_node_config):
    # Naive regression needs T - 1 >= 2N; T = 5 cannot identify six states.
    report = run_monte_carlo(three_node_config, [5, 60], 4, 1, method="naive")
    assert report.failures.tolist() == [4, 0]
    assert math.isnan(report.e_int_mean[0]) and np.isfinite(report.e_int_mean[1])


def test_monte_carlo_shapes(three_node_config):
    report = run_monte_carlo(three_node_config, [20, 40, 80], 7, 1)
    assert report.m_errors.shape == (3, 7, 3)
    assert report.e_int_mean.shape == (3,)
    assert np.all(report.e_int_std >= 0) and np.all(report.d_int_std >= 0)
    assert report.node_std(3).shape == (3,)


@pytest.mark.parametrize("grid, trials", [([], 5), ([1], 5), ([10], 0)])
def test_monte_carlo_bad_arguments(three_node_config, grid, trials):
    with pytest.raises(InvalidParameters):
        run_monte_carlo(three_node_config, grid, trials, 0)


@pytest.mark.parametrize("n", [1, 4, 10, 100])
def test_histogram_edges(rng, n):
    x = rng.normal(size=n)
    edges = histogram_edges(np.r_[x, np.nan])
    assert len(edges) == math.ceil(math.sqrt(n)) + 1
    assert edges[-1] >= x.max() and edges[0] <= x.min()
    if n > 1:
        assert edges[0] == x.min() and edges[-1] == x.max()
        np.testing.assert_allclose(np.diff(edges), np.diff(edges)[0])


def test_histogram_edges_empty():
    assert histogram_edges([np.nan]).size == 0
