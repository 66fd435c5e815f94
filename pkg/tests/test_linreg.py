import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmbic.errors import DataError, InsufficientDataError, InvalidArgumentError, NotPSDError
from lmbic.linreg import annihilate, fit_ols, pinv_psd


def test_fit_exact_constant():
    fit = fit_ols([1, 1, 1], np.ones((3, 1)))
    np.testing.assert_allclose(fit.beta, [1.0])
    np.testing.assert_allclose(fit.residuals, 0, atol=1e-15)
    assert fit.sigma2 == pytest.approx(0, abs=1e-30)


def test_fit_mean_only():
    fit = fit_ols([1, 2, 4], np.ones((3, 1)))
    assert fit.beta[0] == pytest.approx(7 / 3, rel=1e-14)
    assert fit.sigma2 == pytest.approx(14 / 9, rel=1e-14)
    np.testing.assert_allclose(fit.residuals, [-4 / 3, -1 / 3, 5 / 3], rtol=1e-13)


def test_fit_exact_line():
    W = np.array([[1, 0], [1, 1], [1, 2]], dtype=float)
    fit = fit_ols([0, 1, 2], W)
    np.testing.assert_allclose(fit.beta, [0, 1], atol=1e-14)
    np.testing.assert_allclose(fit.residuals, 0, atol=1e-14)
    assert fit.effective_rank == 2


def test_fit_errors():
    with pytest.raises(InsufficientDataError):
        fit_ols([1, 2], np.ones((2, 3)))
    with pytest.raises(DataError):
        fit_ols([1, np.inf, 2], np.ones((3, 1)))
    with pytest.raises(DataError):
        fit_ols([1, 2, 3], np.array([[1.0], [np.nan], [1.0]]))


def _random_design(rng, n, m, cond_ok=True):
    W = rng.standard_normal((n, m))
    return W


@pytest.mark.parametrize("seed", range(10))
def test_fit_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    n, m = 60, 5
    W = _random_design(rng, n, m) * rng.uniform(0.1, 10, size=m)
    Y = rng.standard_normal(n)
    assert np.linalg.cond(W) < 1e6
    fit = fit_ols(Y, W)
    beta_ne = np.linalg.solve(W.T @ W, W.T @ Y)
    np.testing.assert_allclose(fit.beta, beta_ne, rtol=1e-8)
    # Pythagoras
    yy = Y @ Y
    fitted = W @ fit.beta
    assert fitted @ fitted + fit.residuals @ fit.residuals == pytest.approx(yy, rel=1e-8)
    # residual orthogonality
    scale = np.linalg.norm(W) * np.linalg.norm(fit.residuals)
    assert np.max(np.abs(W.T @ fit.residuals)) <= 1e-6 * scale
    assert fit.sigma2 == pytest.approx(np.sum(fit.residuals**2) / n, rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_fit_minimum_norm_on_rank_deficient(seed):
    rng = np.random.default_rng(100 + seed)
    n, p = 30, int(rng.integers(3, 7))
    B = rng.standard_normal((n, p - 1))
    # last column duplicates a combination of the others
    W = np.column_stack([B, B @ rng.standard_normal(p - 1)])
    Y = rng.standard_normal(n)
    fit = fit_ols(Y, W)
    assert fit.effective_rank == p - 1
    # eigendecomposition oracle for the minimum-norm solution
    lam, V = np.linalg.eigh(W.T @ W)
    keep = lam > 1e-10 * lam[-1]
    beta_mn = V[:, keep] @ ((V[:, keep].T @ (W.T @ Y)) / lam[keep])
    np.testing.assert_allclose(fit.beta, beta_mn, rtol=1e-7, atol=1e-9)
    # any other least-squares solution is longer
    null = V[:, ~keep][:, 0]
    assert np.linalg.norm(fit.beta) < np.linalg.norm(fit.beta + 0.1 * null)


def test_fit_zero_column():
    W = np.column_stack([np.ones(5), np.zeros(5)])
    fit = fit_ols(np.arange(5.0), W)
    assert fit.effective_rank == 1
    np.testing.assert_allclose(fit.beta, [2.0, 0.0])


def test_fit_ill_conditioned_tensor_power():
    rng = np.random.default_rng(3)
    x, z = rng.uniform(0, 4, 2000), rng.uniform(1, 5, 2000)
    W = np.column_stack([x**i * z**j for i in range(5) for j in range(5)])
    beta = rng.standard_normal(25)
    Y = W @ beta
    fit = fit_ols(Y, W)
    assert fit.effective_rank == 25
    assert np.linalg.norm(fit.residuals) <= 1e-9 * np.linalg.norm(Y)


def test_annihilate_examples():
    out = annihilate(np.array([[1.0], [2.0], [3.0]]), np.ones((3, 1)))
    np.testing.assert_allclose(out[:, 0], [-1, 0, 1], atol=1e-14)

    rng = np.random.default_rng(4)
    W = rng.standard_normal((40, 3))
    Q, _ = np.linalg.qr(np.column_stack([W, rng.standard_normal((40, 2))]))
    T_perp = Q[:, 3:]
    np.testing.assert_allclose(annihilate(T_perp, W), T_perp, rtol=1e-10, atol=1e-12)
    T_in = W @ rng.standard_normal((3, 4))
    np.testing.assert_allclose(annihilate(T_in, W), 0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
def test_annihilate_idempotent(seed, m, r):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((50, m))
    T = rng.standard_normal((50, r))
    once = annihilate(T, W)
    twice = annihilate(once, W)
    np.testing.assert_allclose(twice, once, rtol=1e-9, atol=1e-12 * np.abs(T).max())


def test_annihilate_no_n_by_n():
    # n large enough that an n x n projector would be prohibitive
    rng = np.random.default_rng(5)
    n = 200_000
    W = np.column_stack([np.ones(n), rng.standard_normal(n)])
    T = rng.standard_normal((n, 2))
    out = annihilate(T, W)
    assert np.abs(W.T @ out).max() < 1e-6 * n


def test_pinv_psd_examples():
    P, k = pinv_psd(np.eye(3))
    np.testing.assert_allclose(P, np.eye(3))
    assert k == 3
    P, k = pinv_psd(np.diag([2.0, 0.0]))
    np.testing.assert_allclose(P, np.diag([0.5, 0.0]))
    assert k == 1


@pytest.mark.parametrize("seed", range(5))
def test_pinv_psd_penrose(seed):
    B = np.random.default_rng(seed).standard_normal((5, 3))
    A = B.T @ B
    P, k = pinv_psd(A)
    np.testing.assert_allclose(A @ P @ A, A, rtol=1e-8, atol=1e-12)
    # rank-deficient case
    C = np.column_stack([B, B[:, 0] + B[:, 1]])
    A2 = C.T @ C
    P2, k2 = pinv_psd(A2)
    assert k2 == 3
    np.testing.assert_allclose(A2 @ P2 @ A2, A2, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(P2, np.linalg.pinv(A2, rcond=1e-10, hermitian=True), rtol=1e-6, atol=1e-10)


def test_pinv_psd_errors():
    with pytest.raises(InvalidArgumentError):
        pinv_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPSDError):
        pinv_psd(np.diag([1.0, -1.0]))
