"""Integer rounding, the femto-caching soft-hit probability, and placement I/O."""

import csv
import json

import numpy as np

from ..errors import InvalidParameter
from .core import PlacementVector

__all__ = [
    'integerize',
    'femto_hit_probability',
    'save_placement',
    'load_placement',
    'save_report',
]


def integerize(placement, mode='round'):
    """Turn a continuous placement into a deployable one.

    ``round``: largest-remainder rounding to ``round(sum n)`` replicas;
    remainder ties go to the lower index. ``fractional``: ``floor(n_i)``
    full copies plus one partial copy holding ``frac(n_i)`` of the
    content, kept in ``PlacementVector.partial``.
    """
    n = placement.n
    M, C = placement.M, placement.C
    base = np.floor(n + 1e-12)
    frac = np.clip(n - base, 0.0, None)
    frac[frac < 1e-12] = 0.0
    if mode == 'fractional':
        return PlacementVector(base, M, C, partial=frac)
    if mode != 'round':
        raise InvalidParameter(f"unknown integerize mode {mode!r}")
    target = min(int(round(float(n.sum()))), M * C)
    extra = target - int(base.sum())
    out = base.copy()
    if extra > 0:
        # stable sort keeps lower indices first among equal remainders
        order = np.argsort(-frac, kind='stable')
        out[order[:extra]] += 1
    return PlacementVector(out, M, C)


def femto_hit_probability(x, U, user_cells, content):
    """Soft-hit probability for one request under femto-caching.

    ``1 - prod_{j in G} prod_k (1 - x_jk) ** u_ik`` where ``x`` is the
    binary cell-by-content storage matrix, ``G`` the cells in the user's
    range and ``u_ii = 1``.
    """
    x = np.asarray(x, dtype=float)
    if U.case != 1:
        raise InvalidParameter("femto-caching soft hits need a Case 1 graph")
    cells = np.asarray(list(user_cells), dtype=np.int64)
    if cells.size == 0:
        return 0.0
    u = np.zeros(x.shape[1])
    u[content] = 1.0
    u[U.rows[content]] = 1.0
    miss = np.prod((1.0 - x[cells]) ** u[None, :])
    return float(1.0 - miss)


def save_placement(path, continuous, integer=None):
    """CSV ``content_index,n_continuous,n_integer``."""
    cont = continuous.n if isinstance(continuous, PlacementVector) else np.asarray(continuous)
    if integer is None:
        ints = np.full(cont.size, '')
    else:
        ints = integer.n if isinstance(integer, PlacementVector) else np.asarray(integer)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh)
        w.writerow(['content_index', 'n_continuous', 'n_integer'])
        for k in range(cont.size):
            iv = ints[k]
            w.writerow([k, repr(float(cont[k])), '' if iv == '' else int(iv)])


def load_placement(path, M, C, column='n_continuous'):
    with open(path, newline='', encoding='utf-8') as fh:
        rows = list(csv.DictReader(fh))
    return PlacementVector([float(r[column]) for r in rows], M, C)


def save_report(path, report, **extra):
    rec = dict(report.as_record())
    rec.update(extra)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)
        fh.write('\n')
