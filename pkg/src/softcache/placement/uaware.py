"""Relation-aware optimal placement (Case 1 and Case 2) and curvature checks.

Both objectives are concave and have the shape

    f(N) = sum_k w_k (1 - exp(-lam T (B N)_k))

for a nonnegative sparse ``B``. Case 1 uses ``B = I`` (the relation
indicator with its diagonal) and ``w = p``; Case 2 stacks ``B = [Id; I]``
with ``w = [(1 - c) p; c p]``. The solver is projected gradient ascent
over the feasible set ``{0 <= N <= M, sum N <= M C}``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidParameter
from .core import (PlacementVector, SolveReport, _lam_t, _require_case, as_counts,
                   g_sch1, g_sch2)
from .projection import project_capped_simplex
from .waterfill import _check_capacity, solve_baseline

__all__ = [
    'SolverOptions',
    'solve_u_aware_case1',
    'solve_u_aware_case2',
    'hessian_case2',
    'hessian_case1',
]


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 10_000
    armijo: float = 1e-4
    min_step: float = 1e-30


class _ExpSum:
    """``f(N) = sum_k w_k (1 - exp(-a (B N)_k))`` with exact increments."""

    def __init__(self, B, w, a):
        self.B = sp.csr_matrix(B)
        self.BT = self.B.T.tocsr()
        self.w = np.asarray(w, dtype=float)
        self.a = a

    def state(self, n):
        return self.w * np.exp(-self.a * (self.B @ n))

    def value(self, n):
        return float(np.dot(self.w, -np.expm1(-self.a * (self.B @ n))))

    def grad_from_state(self, s):
        return self.a * (self.BT @ s)

    def increment(self, s, d):
        # f(n + d) - f(n) computed without cancellation
        return float(np.dot(s, -np.expm1(-self.a * (self.B @ d))))


def _ascend(obj, n0, M, cap, opts):
    n = n0.copy()
    s = obj.state(n)
    g = obj.grad_from_state(s)
    step = 1.0 / max(obj.a * float(np.max(g)), 1e-300)
    prev = None
    it = 0
    converged = False
    tau = 0.0
    for it in range(1, opts.max_iter + 1):
        y, tau = project_capped_simplex(n + g, M, cap)
        pg_norm = np.linalg.norm(y - n)
        if pg_norm <= opts.tolerance:
            converged = True
            break
        if prev is not None:
            ds, dg = n - prev[0], g - prev[1]
            curv = -float(np.dot(ds, dg))
            if curv > 0:
                step = float(np.dot(ds, ds)) / curv
            else:
                step *= 2.0
        t = step
        while True:
            cand, _ = project_capped_simplex(n + t * g, M, cap)
            d = cand - n
            gain = obj.increment(s, d)
            if gain >= opts.armijo * float(np.dot(g, d)) or t < opts.min_step:
                break
            t *= 0.5
        if t < opts.min_step:
            break
        prev = (n, g)
        n = cand
        s = obj.state(n)
        g = obj.grad_from_state(s)
    y, tau = project_capped_simplex(n + g, M, cap)
    residual = float(np.linalg.norm(y - n))
    converged = converged or residual <= opts.tolerance
    return n, it, residual, tau, converged


def _solve(catalog, obj, model, M, C, opts, start):
    _check_capacity(M, C)
    opts = opts or SolverOptions()
    cap = float(M * C)
    if start is None:
        start = solve_baseline(catalog, model, M, C)[0].n
    n0 = project_capped_simplex(np.asarray(start, dtype=float), M, cap)[0]
    n, it, res, tau, ok = _ascend(obj, n0, M, cap, opts)
    return n, it, res, tau, ok


def solve_u_aware_case1(catalog, U, model, M, C, opts=None, start=None):
    """Placement maximizing the Case 1 soft-hit ratio.

    Starts from the baseline water-filling placement, so the returned
    objective never falls below the oblivious optimum's. The report's
    ``rho`` is the capacity multiplier at the final iterate.
    """
    _require_case(U, 1)
    if U.K != catalog.K:
        raise InvalidParameter("graph and catalog sizes differ")
    obj = _ExpSum(U.indicator(), catalog.popularity, _lam_t(model))
    n, it, res, tau, ok = _solve(catalog, obj, model, M, C, opts, start)
    pv = PlacementVector(n, M, C)
    return pv, SolveReport(g_sch1(catalog, U, pv, model), it, res, tau, ok)


def solve_u_aware_case2(catalog, U, model, M, C, opts=None, start=None):
    """Placement maximizing the Case 2 expected utility."""
    _require_case(U, 2)
    if U.K != catalog.K:
        raise InvalidParameter("graph and catalog sizes differ")
    K = catalog.K
    p = catalog.popularity
    c = U.c
    B = sp.vstack([sp.identity(K, format='csr'), U.indicator()]).tocsr()
    w = np.concatenate([(1 - c) * p, c * p])
    obj = _ExpSum(B, w, _lam_t(model))
    n, it, res, tau, ok = _solve(catalog, obj, model, M, C, opts, start)
    pv = PlacementVector(n, M, C)
    return pv, SolveReport(g_sch2(catalog, U, pv, model), it, res, tau, ok)


def hessian_case2(catalog, U, placement, model, c=None):
    """Hessian of the Case 2 objective from its closed form.

    ``H_mn = -(lam T)^2 [delta_mn p_m (1-c) e^{-lam T N_m}
    + c sum_i p_i I_im I_in e^{-lam T (I N)_i}]``, with ``I`` the relation
    indicator including the diagonal.
    """
    if c is None:
        _require_case(U, 2)
        c = U.c
    p = catalog.popularity
    n = as_counts(placement, p.size)
    a = _lam_t(model)
    I = U.indicator().toarray()
    shared = p * np.exp(-a * (I @ n))
    H = -(a ** 2) * c * (I.T * shared) @ I
    H[np.diag_indices_from(H)] -= (a ** 2) * p * (1 - c) * np.exp(-a * n)
    return H


def hessian_case1(catalog, U, placement, model):
    """Hessian of the Case 1 objective, ``-(lam T)^2 I^T diag(p e^{-lam T I N}) I``."""
    return hessian_case2(catalog, U.with_case(1), placement, model, c=1.0)
