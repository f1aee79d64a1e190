import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcause.knockoff import (
    KnockoffError,
    build_model,
    cov_to_corr,
    diagnostics,
    fit_gaussian,
    sample_knockoffs,
    solve_s,
)
from gcause.series import MultivariateSeries


def brute_force_s(corr, step=0.01):
    """Best sum(s) over a grid, feasibility by eigenvalues (independent of the Cholesky path)."""
    n = corr.shape[0]
    grid = np.round(np.arange(0, 1 + step / 2, step), 10)
    best, arg = -1.0, None
    for s in itertools.product(grid, repeat=n):
        if np.linalg.eigvalsh(2 * corr - np.diag(s))[0] >= -1e-12 and sum(s) > best:
            best, arg = sum(s), np.array(s)
    return best, arg


def corr2(rho):
    return np.array([[1.0, rho], [rho, 1.0]])


def test_equicorrelated_closed_form():
    np.testing.assert_allclose(solve_s(corr2(0.5), "equicorrelated"), [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(solve_s(corr2(0.9), "equicorrelated"), [0.2, 0.2], atol=1e-9)


@pytest.mark.parametrize("method", ["equicorrelated", "sdp_coordinate"])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_identity_gives_ones(method, n):
    np.testing.assert_allclose(solve_s(np.eye(n), method), np.ones(n), atol=1e-12)


def test_sdp_coordinate_rho_09_against_grid():
    best, _ = brute_force_s(corr2(0.9))
    s = solve_s(corr2(0.9), "sdp_coordinate")
    assert s.sum() >= 0.4 - 1e-9
    assert abs(s.sum() - best) <= 0.02
    assert np.linalg.eigvalsh(2 * corr2(0.9) - np.diag(s))[0] >= -1e-9


def test_sdp_coordinate_three_by_three_against_grid():
    # unequal correlations: equicorrelated is loose; grid optimum here is 1.76
    corr = np.array([[1.0, 0.8, 0.1], [0.8, 1.0, 0.2], [0.1, 0.2, 1.0]])
    best, _ = brute_force_s(corr, step=0.02)
    s = solve_s(corr, "sdp_coordinate")
    equi = solve_s(corr, "equicorrelated")
    assert s.sum() > equi.sum() + 0.1
    assert abs(s.sum() - best) <= 0.02
    assert np.linalg.eigvalsh(2 * corr - np.diag(s))[0] >= -1e-9


def test_solve_s_rejects_bad_input():
    with pytest.raises(KnockoffError):
        solve_s(np.array([[2.0, 0.1], [0.1, 1.0]]))
    with pytest.raises(KnockoffError):
        solve_s(np.array([[1.0, 0.1], [0.3, 1.0]]))


def _random_corr(rng, n):
    A = rng.normal(size=(n, n + 2))
    return cov_to_corr(A @ A.T + 0.05 * np.eye(n))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_solver_feasible_and_dominates(n, seed):
    corr = _random_corr(np.random.default_rng(seed), n)
    equi = solve_s(corr, "equicorrelated")
    s = solve_s(corr, "sdp_coordinate")
    for v in (equi, s):
        assert np.all(v >= 0) and np.all(v <= 1)
        np.linalg.cholesky(2 * corr - np.diag(v) + 1e-10 * np.eye(n))
    assert s.sum() >= equi.sum() - 1e-12


def test_fit_gaussian_moments():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((5000, 2))
    model = fit_gaussian(X)
    # standard error of a mean is 1/sqrt(5000) ~ 0.014 and of a covariance entry ~ 0.02
    np.testing.assert_allclose(model.mu, 0, atol=0.05)
    np.testing.assert_allclose(model.sigma, np.eye(2), atol=0.05)
    np.testing.assert_allclose(model.s, 1.0, atol=0.1)
    assert model.shrinkage == 0.0


def test_fit_gaussian_duplicate_column():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(200)
    X = np.column_stack([x, x, rng.standard_normal(200)])
    with pytest.raises(KnockoffError):
        fit_gaussian(X, shrinkage=0.0)
    auto = fit_gaussian(X)
    assert auto.shrinkage > 0
    assert np.linalg.eigvalsh(auto.sigma)[0] >= 1e-6


def test_fit_gaussian_too_short():
    with pytest.raises(KnockoffError):
        fit_gaussian(np.ones((1, 3)))


def test_model_invariants():
    rng = np.random.default_rng(3)
    cov = np.array([[1.0, 0.6, 0.3], [0.6, 1.0, 0.5], [0.3, 0.5, 1.0]])
    X = rng.multivariate_normal(np.zeros(3), cov, size=2000)
    m = fit_gaussian(X)
    np.testing.assert_allclose(m.sigma, m.sigma.T, atol=1e-10)
    assert np.linalg.eigvalsh(m.sigma)[0] > 0
    assert np.all((0 <= m.s) & (m.s <= 1))
    np.linalg.cholesky(2 * cov_to_corr(m.sigma) - np.diag(m.s) + 1e-10 * np.eye(3))
    L = m.cond_cov_chol
    np.testing.assert_array_equal(L, np.tril(L))
    np.testing.assert_allclose(m.cond_mean_mat, np.eye(3) - m.pull, atol=1e-12)


def test_zero_s_reproduces_originals_exactly():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 3))
    m = build_model(X.mean(0), np.cov(X, rowvar=False), np.zeros(3))
    np.testing.assert_array_equal(sample_knockoffs(m, X, seed=1), X)


def test_independent_knockoffs_for_identity():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((5000, 3))
    m = build_model(np.zeros(3), np.eye(3), np.ones(3))
    Xk = sample_knockoffs(m, X, seed=6)
    cross = np.corrcoef(X.T, Xk.T)[:3, 3:]
    assert np.max(np.abs(cross)) <= 0.05


def test_sampling_is_deterministic_and_type_preserving():
    rng = np.random.default_rng(7)
    s = MultivariateSeries(rng.normal(size=(100, 3)), ("a", "b", "c"))
    m = fit_gaussian(s)
    k1, k2 = sample_knockoffs(m, s, seed=9), sample_knockoffs(m, s, seed=9)
    assert isinstance(k1, MultivariateSeries) and k1.names == s.names
    np.testing.assert_array_equal(k1.values, k2.values)
    assert not np.array_equal(k1.values, sample_knockoffs(m, s, seed=10).values)


def test_sampling_dimension_mismatch():
    m = build_model(np.zeros(2), np.eye(2), np.ones(2))
    with pytest.raises(KnockoffError):
        sample_knockoffs(m, np.zeros((5, 3)), seed=0)


def test_diagnostics_identity_copy():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 3))
    d = diagnostics(X, X)
    np.testing.assert_allclose(d.self_corr, 1.0)
    assert d.knockoff_corr_dev == pytest.approx(0.0, abs=1e-12)
    assert set(d.to_json()) == {"knockoff_corr_dev", "cross_corr_dev", "self_corr"}


def test_diagnostics_independent():
    rng = np.random.default_rng(9)
    X, Y = rng.normal(size=(5000, 3)), rng.normal(size=(5000, 3))
    assert np.max(np.abs(diagnostics(X, Y).self_corr)) <= 0.05


def test_diagnostics_shape_mismatch():
    with pytest.raises(KnockoffError):
        diagnostics(np.zeros((5, 2)), np.zeros((4, 2)))


def test_knockoff_correlation_rho_05():
    rng = np.random.default_rng(10)
    cov = corr2(0.5)
    X = rng.multivariate_normal([0, 0], cov, size=5000)
    m = fit_gaussian(X)
    Xk = sample_knockoffs(m, X, seed=11)
    assert abs(np.corrcoef(Xk.T)[0, 1] - 0.5) <= 0.1


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 5), st.integers(0, 1000))
def test_second_order_exchangeability(n, seed):
    rng = np.random.default_rng(seed)
    corr = _random_corr(rng, n)
    X = rng.multivariate_normal(np.zeros(n), corr, size=5000)
    m = fit_gaussian(X)
    Xk = sample_knockoffs(m, X, seed=seed + 1)
    d = diagnostics(X, Xk)
    assert d.knockoff_corr_dev <= 0.1
    assert d.cross_corr_dev <= 0.1
    np.testing.assert_allclose(d.self_corr, 1 - m.s, atol=0.1)
