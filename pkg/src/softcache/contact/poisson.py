"""IID exponential meeting process between every user and every cell."""

import numpy as np

from ..errors import InvalidParameter
from .trace import ContactTrace

__all__ = ['exponential_trace']


def exponential_trace(users, cells, lam, horizon, seed=None, duration=1e-3):
    """Poisson contact process of rate ``lam`` for each user/cell pair.

    Contact start times of every pair form an independent Poisson process,
    so the residual time to the next meeting is ``Exp(lam)`` from any
    instant. Each contact lasts ``duration`` seconds (any positive length
    serves one content).
    """
    if not lam > 0:
        raise InvalidParameter("meeting rate must be > 0")
    if horizon < 0 or duration <= 0:
        raise InvalidParameter("horizon must be >= 0 and duration > 0")
    rng = np.random.default_rng(seed)
    n_pairs = users * cells
    if horizon == 0 or n_pairs == 0:
        empty = np.zeros(0)
        return ContactTrace(empty, empty, empty, empty, float(horizon), users, cells)
    counts = rng.poisson(lam * horizon, size=n_pairs)
    pair = np.repeat(np.arange(n_pairs), counts)
    start = rng.uniform(0.0, horizon, size=pair.size)
    end = np.minimum(start + duration, horizon)
    return ContactTrace.from_contacts(pair // cells, pair % cells, start, end,
                                      horizon, users, cells)
