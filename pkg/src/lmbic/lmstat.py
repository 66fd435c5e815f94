"""LM-type quadratic forms and their standardization.

Both statistics are squared norms of a projection. The homoskedastic form is
``||Proj_P e||^2 / sigma2``; since the restricted residuals ``e`` are
orthogonal to W, projecting on P = (W, T) is the same as projecting on the
annihilated block ``T~ = M_W T``, which is what :func:`lm_statistics` does.
The robust form equals ``||Proj_A sign(e)||^2`` with ``A = |e| * T~`` (rows
weighted by ``|e_i|``), because ``T~' Sigma T~ = A'A`` and ``T~'e = A' sign(e)``.

Projections are taken from a pivoted QR of the column-scaled matrix rather
than from a pseudo-inverse of its Gram matrix, which would square the
condition number of tensor-power bases. The Gram route is kept as
``method="gram"`` and agrees on well-conditioned inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDesignError,
    DegenerateFitError,
    InvalidArgumentError,
    NotApplicableError,
)
from .linreg import (
    DEFAULT_RTOL,
    FitResult,
    _as_matrix,
    _as_vector,
    _pivoted_qr,
    annihilate_with,
    column_scale,
    fit_ols,
    pinv_psd,
)

# relative residual norm below which a fit counts as exact
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class LmStatistics:
    form_name: str
    r: int
    xi: float
    t: float | None
    xi_hc: float | None = None
    t_hc: float | None = None
    rank: int | None = None
    warnings: tuple[str, ...] = ()


def projected_sq_norm(v, A, rel_tol: float = DEFAULT_RTOL, method: str = "qr"):
    """``v' A (A'A)^+ A' v`` and the retained rank of ``A``."""
    v = _as_vector(v, "v")
    A = _as_matrix(A, "A")
    if A.shape[1] == 0:
        return 0.0, 0
    if method == "qr":
        Q, _, _, rank = _pivoted_qr(A / column_scale(A), rel_tol)
        proj = Q[:, :rank].T @ v
        return float(proj @ proj), rank
    if method == "gram":
        As = A / column_scale(A)
        G, rank = pinv_psd(As.T @ As, rel_tol)
        g = As.T @ v
        return float(g @ G @ g), rank
    raise InvalidArgumentError(f"unknown method {method!r}")


def xi_homoskedastic(
    residuals, P, sigma2: float, rel_tol: float = DEFAULT_RTOL, method: str = "qr"
) -> float:
    """``e' P (sigma2 P'P)^+ P' e``.

    Raises :class:`DegenerateFitError` when ``sigma2`` is zero.
    """
    if not sigma2 > 0:
        raise DegenerateFitError("residual variance is zero; the LM statistic is undefined")
    value, _ = projected_sq_norm(residuals, P, rel_tol, method)
    return value / sigma2


def xi_hc(residuals, T_tilde, rel_tol: float = DEFAULT_RTOL, method: str = "qr") -> float:
    """Heteroskedasticity-robust form ``e' T~ (T~' diag(e^2) T~)^+ T~' e``."""
    e = _as_vector(residuals, "residuals")
    T_tilde = _as_matrix(T_tilde, "T_tilde")
    if T_tilde.shape[1] < 1:
        raise InvalidArgumentError("xi_hc needs at least one restriction")
    value, _ = _xi_hc(e, T_tilde, rel_tol, method)
    return value


def _xi_hc(e: np.ndarray, Tt: np.ndarray, rel_tol: float, method: str):
    if not np.any(e != 0):
        raise DegenerateFitError("all residuals are zero; the robust statistic is undefined")
    if method == "gram":
        Ts = Tt / column_scale(Tt)
        G = Ts.T @ (Ts * (e * e)[:, None])
        if not np.any(G != 0):
            raise DegenerateDesignError("T~' Sigma T~ is numerically zero")
        Gp, rank = pinv_psd(G, rel_tol)
        g = Ts.T @ e
        return float(g @ Gp @ g), rank
    A = Tt * np.abs(e)[:, None]
    if not np.any(A != 0):
        raise DegenerateDesignError("T~' Sigma T~ is numerically zero")
    value, rank = projected_sq_norm(np.sign(e), A, rel_tol, "qr")
    if rank == 0:
        raise DegenerateDesignError("T~' Sigma T~ is numerically zero")
    return value, rank


def t_statistic(xi: float, r: int) -> float:
    """Standardized statistic ``(xi - r) / sqrt(2 r)``."""
    if r < 1:
        raise NotApplicableError("the t-statistic is undefined for r = 0")
    return (xi - r) / math.sqrt(2.0 * r)


def lm_statistics(
    Y,
    W,
    T,
    *,
    hc: bool = False,
    form_name: str = "",
    rel_tol: float = DEFAULT_RTOL,
    fit: FitResult | None = None,
) -> tuple[LmStatistics, FitResult]:
    """Fit ``Y`` on ``W`` and compute the LM statistics against ``T``.

    Parameters
    ----------
    Y : array_like, shape (n,)
    W : array_like, shape (n, m)
        Restricted design.
    T : array_like, shape (n, r)
        Excluded terms of the full basis; ``r = 0`` gives ``xi = 0``.
    hc : bool
        Also compute the heteroskedasticity-robust form.
    fit : FitResult, optional
        A precomputed fit of ``Y`` on ``W``.

    Returns
    -------
    (LmStatistics, FitResult)
    """
    Y = _as_vector(Y, "Y")
    T = _as_matrix(T, "T") if np.size(T) else np.empty((Y.shape[0], 0))
    if fit is None:
        fit = fit_ols(Y, W, rel_tol)
    notes = []
    m = np.shape(W)[1] if np.ndim(W) == 2 else 1
    if fit.effective_rank < m:
        notes.append(
            f"{form_name or 'form'}: restricted design has numerical rank "
            f"{fit.effective_rank} < m = {m}"
        )
    r = T.shape[1]
    if r == 0:
        stats = LmStatistics(form_name, 0, 0.0, None, 0.0 if hc else None, None, 0, tuple(notes))
        return stats, fit

    e = fit.residuals
    if math.sqrt(fit.sigma2 * fit.n) <= DEGENERATE_RTOL * max(float(np.linalg.norm(Y)), 1e-300):
        raise DegenerateFitError(
            f"{form_name or 'form'}: perfect in-sample fit; the LM statistic is undefined"
        )

    n = Y.shape[0]
    Tt = annihilate_with(T / column_scale(T), fit.basis)
    # rank of T~ judged against the unit-RMS scale of T, i.e. jointly with W
    Q, _, piv, rank = _pivoted_qr(Tt, rel_tol, reference=math.sqrt(n))
    proj = Q[:, :rank].T @ e
    xi = float(proj @ proj) / fit.sigma2
    if rank < r:
        notes.append(
            f"{form_name or 'form'}: excluded terms have numerical rank {rank} < r = {r} "
            "after annihilation; nominal r is used"
        )
    xi_r = t_r = None
    if hc:
        xi_r, rank_hc = _xi_hc(e, Tt[:, piv[:rank]], rel_tol, "qr")
        t_r = t_statistic(xi_r, r)
        if rank_hc < rank:
            notes.append(
                f"{form_name or 'form'}: robust weight matrix has numerical rank {rank_hc} "
                f"< {rank}; nominal r is used"
            )
    stats = LmStatistics(form_name, r, xi, t_statistic(xi, r), xi_r, t_r, rank, tuple(notes))
    return stats, fit
