"""Baseline (recommendation-oblivious) optimal placement and its analytics."""

import numpy as np
from scipy.special import logsumexp

from ..errors import InvalidParameter, NotApplicable, NumericFailure
from .core import PlacementVector, SolveReport, _lam_t, g_base
from .projection import project_capped_simplex

__all__ = [
    'waterfill',
    'solve_baseline',
    'kkt_residual',
    'base_miss_rate',
    'analytic_gain_case1',
    'interior_bounds',
]


def waterfill(p, lam_t, M, rho):
    """Replica counts ``clip(ln(p lam T / rho) / (lam T), 0, M)``.

    The three branches (empty, interior, full) are the clip; the interior
    band is ``rho / (lam T) <= p_i <= rho / (lam T) * exp(lam T M)``.
    """
    p = np.asarray(p, dtype=float)
    if rho <= 0:
        return np.full(p.size, float(M))
    return np.clip(np.log(p * lam_t / rho) / lam_t, 0.0, M)


def interior_bounds(lam_t, M, rho):
    """Popularity thresholds (lower, upper) of the interior band."""
    lower = rho / lam_t
    return lower, lower * np.exp(lam_t * M)


def kkt_residual(grad, n, M, capacity):
    """Projected-gradient norm ``||P(n + grad) - n||``; zero exactly at a KKT point."""
    y, _ = project_capped_simplex(n + grad, M, capacity)
    return float(np.linalg.norm(y - n))


def _check_capacity(M, C):
    if int(M) != M or int(C) != C or M < 1 or C < 1:
        raise InvalidParameter("M and C must be integers >= 1")


def solve_baseline(catalog, model, M, C, tol=1e-12, max_iter=500):
    """Optimal continuous placement of the hit ratio without soft hits.

    ``rho`` is found by bisection in ``log rho`` until the total replica
    count matches ``M * C``; the total is piecewise linear in ``log rho``,
    so the final bracket's linear piece is then solved exactly.

    Returns
    -------
    placement : PlacementVector
    report : SolveReport
        ``rho`` is 0 when capacity is slack (every content in every cell).
    """
    _check_capacity(M, C)
    p = catalog.popularity
    K = p.size
    a = _lam_t(model)
    cap = float(M * C)
    if cap >= K * M:
        n = np.full(K, float(M))
        pv = PlacementVector(n, M, C)
        res = kkt_residual(a * p * np.exp(-a * n), n, M, cap)
        return pv, SolveReport(g_base(catalog, pv, model), 0, res, 0.0)

    log_pa = np.log(p * a)

    def total(log_rho):
        return np.clip((log_pa - log_rho) / a, 0.0, M).sum()

    lo = log_pa.min() - a * M - 1.0
    hi = log_pa.max()
    it = 0
    mid = hi
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        s = total(mid)
        if s > cap:
            lo = mid
        else:
            hi = mid
        if abs(s - cap) <= tol * cap:
            break
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            mid = 0.5 * (lo + hi)
            break
    log_rho = mid
    # exact solve on the linear piece containing log_rho
    n = (log_pa - log_rho) / a
    inner = (n > 0) & (n < M)
    if inner.any():
        full = np.count_nonzero(n >= M)
        candidate = (log_pa[inner].sum() - a * (cap - M * full)) / inner.sum()
        if abs(total(candidate) - cap) <= abs(total(log_rho) - cap):
            log_rho = candidate
    if abs(total(log_rho) - cap) > 1e-9 * cap:
        raise NumericFailure(f"bisection for rho did not converge in {max_iter} steps")
    rho = float(np.exp(log_rho))
    n = np.clip((log_pa - log_rho) / a, 0.0, M)
    # shave rounding so the capacity constraint holds exactly
    excess = n.sum() - cap
    if excess > 0:
        n = project_capped_simplex(n, M, cap)[0]
    pv = PlacementVector(n, M, C)
    res = kkt_residual(a * p * np.exp(-a * n), n, M, cap)
    return pv, SolveReport(g_base(catalog, pv, model), it, res, rho)


def base_miss_rate(K, model, rho):
    """Miss ratio ``K rho / (lam T)`` of the baseline optimum in the interior regime."""
    return K * rho / _lam_t(model)


def analytic_gain_case1(catalog, U, model, rho, M=None):
    """Closed-form miss-rate ratio ``(1 - g_base(N*)) / (1 - g_sch1(N*))``.

    Evaluates ``K (lam T / rho)**(L_row - 1) / sum_i p_i prod_j p_j**-u_ij``
    where ``L_row`` counts the nonzeros of a row including the diagonal.

    Raises
    ------
    NotApplicable
        If rows have unequal degree, the graph is not Case 1, or (when
        ``M`` is given) some popularity lies outside the interior band.
    """
    if U.case != 1:
        raise NotApplicable("the closed-form gain covers Case 1 graphs only")
    deg = U.degrees
    if np.any(deg != deg[0]):
        raise NotApplicable("every row must have the same number of related contents")
    if not rho > 0:
        raise NotApplicable("rho must be > 0 (capacity constraint binding)")
    a = _lam_t(model)
    p = catalog.popularity
    if M is not None:
        lower, upper = interior_bounds(a, M, rho)
        slack = 1e-12
        if np.any(p < lower * (1 - slack)) or np.any(p > upper * (1 + slack)):
            raise NotApplicable("some popularity lies outside the interior band")
    L_row = int(deg[0]) + 1
    log_p = np.log(p)
    # log prod_j p_j^-u_ij over the row including the diagonal
    row_log = -(log_p + U.adjacency() @ log_p)
    log_den = logsumexp(log_p + row_log)
    log_gain = np.log(p.size) + (L_row - 1) * np.log(a / rho) - log_den
    return float(np.exp(log_gain))
