"""Dense least squares on a rank-revealing factorization.

Power and tensor-power designs are badly conditioned, so nothing here forms
normal equations. Columns are scaled to unit root-mean-square, factorized
with column-pivoted QR, and the numerical rank is read off the diagonal of R
relative to its largest entry. Scaling changes neither the fitted values nor
the residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataError, InsufficientDataError, InvalidArgumentError, NotPSDError

DEFAULT_RTOL = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of Y on W.

    ``basis`` is an orthonormal basis (n x effective_rank) of the retained
    column space of W; downstream statistics reuse it to annihilate other
    regressors without refactorizing.
    """

    beta: np.ndarray
    residuals: np.ndarray
    sigma2: float
    effective_rank: int
    n: int
    basis: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False, default=None)


def _as_matrix(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a matrix")
    if not np.all(np.isfinite(A)):
        row = int(np.nonzero(~np.isfinite(A).all(axis=1))[0][0])
        raise DataError(f"non-finite value in {name}, row {row}")
    return A


def _as_vector(y, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise DataError(f"non-finite value in {name}, row {int(np.nonzero(~np.isfinite(y))[0][0])}")
    return y


def column_scale(A: np.ndarray) -> np.ndarray:
    """Root-mean-square of each column; all-zero columns get scale 1."""
    s = np.sqrt(np.mean(A * A, axis=0)) if A.shape[0] else np.ones(A.shape[1])
    s[s == 0] = 1.0
    return s


def _pivoted_qr(As: np.ndarray, rel_tol: float, reference: float | None = None):
    """Economic pivoted QR plus numerical rank.

    Rank counts diagonal entries of R above ``rel_tol * reference``;
    ``reference`` defaults to the largest diagonal entry.
    """
    if As.shape[1] == 0:
        return np.empty((As.shape[0], 0)), np.empty((0, 0)), np.arange(0), 0
    Q, R, piv = linalg.qr(As, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    ref = d[0] if reference is None else reference
    rank = int(np.sum(d > rel_tol * ref)) if ref > 0 else 0
    return Q, R, piv, rank


def orthonormal_basis(A, rel_tol: float = DEFAULT_RTOL) -> np.ndarray:
    """Orthonormal basis of the numerical column space of ``A``."""
    A = _as_matrix(A, "A")
    Q, _, _, rank = _pivoted_qr(A / column_scale(A), rel_tol)
    return Q[:, :rank]


def fit_ols(Y, W, rel_tol: float = DEFAULT_RTOL) -> FitResult:
    """Least-squares fit of ``Y`` on the columns of ``W``.

    When ``W`` is numerically rank deficient the minimum-norm solution is
    returned (via a complete orthogonal decomposition) and
    ``effective_rank`` records the retained rank.

    Parameters
    ----------
    Y : array_like, shape (n,)
    W : array_like, shape (n, m)
    rel_tol : float
        Relative rank threshold on the pivoted-QR diagonal.

    Returns
    -------
    FitResult
    """
    W = _as_matrix(W, "W")
    Y = _as_vector(Y, "Y")
    n, m = W.shape
    if Y.shape[0] != n:
        raise InvalidArgumentError(f"Y has {Y.shape[0]} rows, W has {n}")
    if m < 1:
        raise InvalidArgumentError("W needs at least one column")
    if n < m:
        raise InsufficientDataError(f"n = {n} observations for m = {m} regressors")

    scale = column_scale(W)
    Q, R, piv, rank = _pivoted_qr(W / scale, rel_tol)
    Q1 = Q[:, :rank]
    c = Q1.T @ Y
    beta = np.zeros(m)
    if rank == m:
        beta[piv] = linalg.solve_triangular(R, c, check_finite=False)
        beta = beta / scale
    elif rank > 0:
        # truncated W = Q1 M with M (rank x m) of full row rank; min-norm
        # solution of M b = c through QR of M'
        M = np.zeros((rank, m))
        M[:, piv] = R[:rank, :]
        M = M * scale[None, :]
        Z, L = linalg.qr(M.T, mode="economic", check_finite=False)
        beta = Z @ linalg.solve_triangular(L, c, trans="T", check_finite=False)
    fitted = Q1 @ c
    residuals = Y - fitted
    return FitResult(
        beta=beta,
        residuals=residuals,
        sigma2=float(residuals @ residuals) / n,
        effective_rank=rank,
        n=n,
        basis=Q1,
        fitted=fitted,
    )


def annihilate(T, W, rel_tol: float = DEFAULT_RTOL) -> np.ndarray:
    """Residuals from regressing every column of ``T`` on ``W``.

    Equivalent to ``(I - W (W'W)^+ W') T`` without forming the n x n matrix.
    """
    T = _as_matrix(T, "T")
    W = _as_matrix(W, "W")
    if T.shape[0] != W.shape[0]:
        raise InvalidArgumentError("T and W must have the same number of rows")
    if T.shape[0] < 1:
        raise DataError("annihilate needs at least one row")
    return annihilate_with(T, orthonormal_basis(W, rel_tol))


def annihilate_with(T: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``T - Q Q' T`` for an orthonormal ``Q``; applied twice for accuracy."""
    out = T - Q @ (Q.T @ T)
    return out - Q @ (Q.T @ out)


def pinv_psd(A, rel_tol: float = DEFAULT_RTOL) -> tuple[np.ndarray, int]:
    """Pseudo-inverse of a symmetric positive semidefinite matrix.

    Eigenvalues at or below ``rel_tol * lambda_max`` are treated as zero.

    Returns
    -------
    pinv : ndarray
    effective_rank : int
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError("pinv_psd needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise DataError("non-finite entry in matrix")
    p = A.shape[0]
    if p == 0:
        return np.empty((0, 0)), 0
    amax = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > 1e-8 * amax:
        raise InvalidArgumentError("matrix is not symmetric")
    lam, V = linalg.eigh((A + A.T) / 2.0, check_finite=False)
    lmax = lam[-1]
    if lmax <= 0:
        if lam[0] < -1e-8 * amax:
            raise NotPSDError(f"matrix has negative eigenvalue {lam[0]:.3g}")
        return np.zeros((p, p)), 0
    if lam[0] < -1e-8 * lmax:
        raise NotPSDError(f"matrix has negative eigenvalue {lam[0]:.3g}")
    keep = lam > rel_tol * lmax
    Vk = V[:, keep]
    return (Vk / lam[keep]) @ Vk.T, int(keep.sum())
