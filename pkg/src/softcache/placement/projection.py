"""Euclidean projection onto the capped simplex ``{0 <= y <= u, sum(y) <= b}``."""

import numpy as np

__all__ = ['project_capped_simplex', 'capped_sum']


def capped_sum(x, tau, upper):
    """``sum(clip(x - tau, 0, upper))`` for a vector of shifts ``tau``.

    Evaluated exactly with sorted prefix sums, so it costs O((K + T) log K).
    """
    x = np.asarray(x, dtype=float)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    xs = np.sort(x)
    csum = np.concatenate([[0.0], np.cumsum(xs)])
    total = csum[-1]
    K = xs.size
    # entries with x > tau
    k_gt = np.searchsorted(xs, tau, side='right')
    n_gt = K - k_gt
    s_gt = total - csum[k_gt]
    # entries with x - upper >= tau (saturated at upper)
    k_cap = np.searchsorted(xs - upper, tau, side='left')
    n_cap = K - k_cap
    s_cap = total - csum[k_cap]
    return upper * n_cap + (s_gt - s_cap) - tau * (n_gt - n_cap)


def project_capped_simplex(x, upper, budget):
    """Project ``x`` onto ``{y : 0 <= y_i <= upper, sum(y) <= budget}``.

    Parameters
    ----------
    x : array-like
        Point to project.
    upper : float
        Per-coordinate cap.
    budget : float
        Bound on the coordinate sum.

    Returns
    -------
    y : ndarray
        The projection ``clip(x - tau, 0, upper)``.
    tau : float
        Multiplier of the sum constraint (0 when it is slack).
    """
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, upper)
    if y.sum() <= budget:
        return y, 0.0
    bps = np.unique(np.concatenate([x, x - upper]))
    bps = bps[bps > 0]
    vals = capped_sum(x, bps, upper)
    # vals is nonincreasing in tau; find the first breakpoint at or below budget
    k = np.searchsorted(-vals, -budget, side='left')
    if k < bps.size and vals[k] == budget:
        tau = bps[k]
    else:
        lo = 0.0 if k == 0 else bps[k - 1]
        s_lo = capped_sum(x, lo, upper)[0]
        hi = bps[k] if k < bps.size else lo + upper
        s_hi = capped_sum(x, hi, upper)[0]
        # linear on [lo, hi]
        tau = lo + (s_lo - budget) * (hi - lo) / (s_lo - s_hi)
    y = np.clip(x - tau, 0.0, upper)
    return y, float(tau)
