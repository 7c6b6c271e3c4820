"""User/small-cell contact traces and queries over them."""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import EstimationError, InvalidParameter, ParseError

__all__ = [
    'ContactTrace',
    'ENTER',
    'EXIT',
    'first_encounters',
    'estimate_lambda',
    'save_trace',
    'load_trace',
]

ENTER = 1
EXIT = 0

_MERGE_EPS = 1e-9


def _merge_intervals(pair, start, end):
    """Sort by (pair, start) and merge touching or overlapping intervals."""
    order = np.lexsort((start, pair))
    pair, start, end = pair[order], start[order], end[order]
    if pair.size == 0:
        return pair, start, end
    touching = (pair[1:] == pair[:-1]) & (start[1:] <= end[:-1] + _MERGE_EPS)
    if not touching.any():
        return pair, start, end
    keep_p, keep_s, keep_e = [], [], []
    cur_p, cur_s, cur_e = pair[0], start[0], end[0]
    for p_, s_, e_ in zip(pair[1:].tolist(), start[1:].tolist(), end[1:].tolist()):
        if p_ == cur_p and s_ <= cur_e + _MERGE_EPS:
            if e_ > cur_e:
                cur_e = e_
        else:
            keep_p.append(cur_p)
            keep_s.append(cur_s)
            keep_e.append(cur_e)
            cur_p, cur_s, cur_e = p_, s_, e_
    keep_p.append(cur_p)
    keep_s.append(cur_s)
    keep_e.append(cur_e)
    return (np.array(keep_p, dtype=np.int64), np.array(keep_s, dtype=float),
            np.array(keep_e, dtype=float))


@dataclass(frozen=True, eq=False)
class ContactTrace:
    """Time-ordered enter/exit events between users and small cells.

    Attributes
    ----------
    time, user, cell, kind : ndarray
        Parallel event arrays; ``kind`` is ``ENTER`` (1) or ``EXIT`` (0).
    horizon : float
        Trace length in seconds; all events lie in ``[0, horizon]``.
    users, cells : int
        Population sizes.
    """

    time: np.ndarray
    user: np.ndarray
    cell: np.ndarray
    kind: np.ndarray
    horizon: float
    users: int
    cells: int

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        u = np.asarray(self.user, dtype=np.int64)
        c = np.asarray(self.cell, dtype=np.int64)
        k = np.asarray(self.kind, dtype=np.int8)
        if not (t.shape == u.shape == c.shape == k.shape):
            raise InvalidParameter("event arrays must have equal length")
        if t.size:
            if np.any(np.diff(t) < 0):
                raise InvalidParameter("events must be sorted by time")
            if t[0] < 0 or t[-1] > self.horizon:
                raise InvalidParameter("event times must lie in [0, horizon]")
            if u.min() < 0 or u.max() >= self.users or c.min() < 0 or c.max() >= self.cells:
                raise InvalidParameter("user or cell index out of range")
        for name, arr in (('time', t), ('user', u), ('cell', c), ('kind', k)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self._pair_index  # validates enter/exit matching

    def __len__(self):
        return self.time.size

    @classmethod
    def from_contacts(cls, user, cell, start, end, horizon, users, cells):
        """Build a trace from contact intervals; overlapping ones are merged."""
        user = np.asarray(user, dtype=np.int64)
        cell = np.asarray(cell, dtype=np.int64)
        start = np.asarray(start, dtype=float)
        end = np.minimum(np.asarray(end, dtype=float), horizon)
        keep = end > start
        pair, start, end = _merge_intervals(user[keep] * cells + cell[keep],
                                            start[keep], end[keep])
        u, c = pair // cells, pair % cells
        n = pair.size
        times = np.concatenate([start, end])
        kinds = np.concatenate([np.full(n, ENTER, np.int8), np.full(n, EXIT, np.int8)])
        us = np.concatenate([u, u])
        cs = np.concatenate([c, c])
        order = np.lexsort((cs, us, kinds, times))
        return cls(times[order], us[order], cs[order], kinds[order], float(horizon),
                   int(users), int(cells))

    @cached_property
    def _pair_index(self):
        pair = self.user * self.cells + self.cell
        order = np.lexsort((-self.kind, self.time, pair))
        p, t, k = pair[order], self.time[order], self.kind[order]
        enters = k == ENTER
        if enters.sum() != (~enters).sum():
            raise InvalidParameter("every exit must match an earlier enter")
        # within each pair events must alternate enter, exit, enter, ...
        starts, ends = t[enters], t[~enters]
        ps, pe = p[enters], p[~enters]
        if ps.size and (np.any(ps != pe) or np.any(ends < starts)
                        or np.any(k[0::2] != ENTER) or np.any(p[0::2] != p[1::2])):
            raise InvalidParameter("every exit must match an earlier enter of the same pair")
        ptr = np.searchsorted(ps, np.arange(self.users * self.cells + 1))
        return ptr, starts, ends

    def contacts(self, user, cell):
        """``(starts, ends)`` of the contacts of one user with one cell."""
        ptr, s, e = self._pair_index
        k = user * self.cells + cell
        return s[ptr[k]:ptr[k + 1]], e[ptr[k]:ptr[k + 1]]

    def contact_intervals(self):
        """All contacts as arrays ``(user, cell, start, end)``."""
        ptr, s, e = self._pair_index
        pair = np.repeat(np.arange(self.users * self.cells), np.diff(ptr))
        return pair // self.cells, pair % self.cells, s, e


def first_encounters(trace, times, users, window):
    """First time each cell is met by each querying user within a window.

    For query ``q`` from user ``users[q]`` at ``times[q]`` the entry for
    cell ``m`` is ``max(start, t)`` of the first contact with ``end >= t``
    and ``start <= t + window`` (a user already in range meets the cell
    immediately); ``inf`` when there is none.

    Returns
    -------
    ndarray, shape (len(times), trace.cells)
    """
    times = np.asarray(times, dtype=float)
    users = np.asarray(users, dtype=np.int64)
    out = np.full((times.size, trace.cells), np.inf)
    if times.size == 0:
        return out
    ptr, s_all, e_all = trace._pair_index
    order = np.argsort(users, kind='stable')
    bounds = np.searchsorted(users[order], np.arange(trace.users + 1))
    for u in range(trace.users):
        q = order[bounds[u]:bounds[u + 1]]
        if q.size == 0:
            continue
        tq = times[q]
        for m in range(trace.cells):
            k = u * trace.cells + m
            lo, hi = ptr[k], ptr[k + 1]
            if lo == hi:
                continue
            s, e = s_all[lo:hi], e_all[lo:hi]
            j = np.searchsorted(e, tq, side='left')
            ok = j < s.size
            jj = np.minimum(j, s.size - 1)
            start = s[jj]
            ok &= start <= tq + window
            out[q[ok], m] = np.maximum(start[ok], tq[ok])
    return out


def estimate_lambda(trace):
    """Maximum-likelihood meeting rate from pooled inter-contact gaps.

    A gap runs from the end of one contact to the start of the next
    contact of the same user/cell pair; the estimate is
    ``n_gaps / sum(gaps)``.
    """
    ptr, s, e = trace._pair_index
    counts = np.diff(ptr)
    if not np.any(counts >= 2):
        raise EstimationError("no user/cell pair has two or more contacts")
    same_pair = np.ones(s.size, dtype=bool)
    same_pair[ptr[1:-1][ptr[1:-1] < s.size]] = False
    same_pair[0] = False
    gaps = (s[1:] - e[:-1])[same_pair[1:]]
    total = gaps.sum()
    if total <= 0:
        raise EstimationError("inter-contact gaps sum to zero")
    return float(gaps.size / total)


def save_trace(trace, path):
    """CSV ``time,user,cell,kind`` with a header, microsecond time precision."""
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        fh.write(f"# horizon={trace.horizon!r} users={trace.users} cells={trace.cells}\n")
        w = csv.writer(fh)
        w.writerow(['time', 'user', 'cell', 'kind'])
        names = {ENTER: 'enter', EXIT: 'exit'}
        for t, u, c, k in zip(trace.time.tolist(), trace.user.tolist(),
                              trace.cell.tolist(), trace.kind.tolist()):
            w.writerow([f"{t:.6f}", u, c, names[k]])


def load_trace(path, horizon=None, users=None, cells=None):
    meta = {}
    rows = []
    with open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith('#'):
                meta.update(kv.split('=') for kv in s[1:].split() if '=' in kv)
                continue
            if s.startswith('time,'):
                continue
            tok = s.split(',')
            if len(tok) != 4 or tok[3] not in ('enter', 'exit'):
                raise ParseError(path, lineno, "expected 'time,user,cell,enter|exit'")
            try:
                rows.append((float(tok[0]), int(tok[1]), int(tok[2]),
                             ENTER if tok[3] == 'enter' else EXIT))
            except ValueError:
                raise ParseError(path, lineno, "bad number") from None
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    horizon = float(meta.get('horizon', horizon if horizon is not None else arr[:, 0].max(initial=0)))
    users = int(meta.get('users', users if users is not None else arr[:, 1].max(initial=-1) + 1))
    cells = int(meta.get('cells', cells if cells is not None else arr[:, 2].max(initial=-1) + 1))
    # re-sort: rounding to microseconds may reorder an enter/exit tie
    order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 3], arr[:, 0]))
    arr = arr[order]
    return ContactTrace(arr[:, 0], arr[:, 1].astype(np.int64), arr[:, 2].astype(np.int64),
                        arr[:, 3].astype(np.int8), horizon, users, cells)
