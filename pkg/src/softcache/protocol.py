"""Discrete-event evaluation of delayed access with soft cache hits.

A request for content ``i`` issued by user ``u`` at time ``t`` looks at
the cells ``u`` meets during ``[t, t + ttl]`` in meeting order:

* ``none``: hit on the first cell holding ``i``, otherwise miss.
* ``sch1``: stop at the first cell holding ``i`` or a related content;
  every such hit has utility 1.
* ``sch2``: keep looking for ``i`` until the deadline; failing that, a
  related content met on the way gives a soft hit of utility ``c``.

Misses are served over the expensive link. Meeting a partial copy of
``i`` is a hit that still fetches the missing fraction over that link.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .contact.trace import first_encounters
from .errors import AssignmentError, InvalidParameter
from .placement import (AccessModel, integerize, solve_baseline, solve_u_aware_case1,
                        solve_u_aware_case2)

__all__ = [
    'RequestStream',
    'CacheAssignment',
    'HitStats',
    'RunRecord',
    'Comparison',
    'MODES',
    'MISS',
    'FULL_HIT',
    'SOFT_HIT',
    'POLICIES',
    'make_requests',
    'assign_caches',
    'request_outcomes',
    'holders_disjoint',
    'exact_hit_probability',
    'exact_objective',
    'simulate',
    'policy_placements',
    'compare_modes',
    'summarize_runs',
    'write_hitstats_csv',
    'HITSTATS_FIELDS',
]

MODES = ('none', 'sch1', 'sch2')
POLICIES = ('base', 'sch1', 'sch2')

MISS, FULL_HIT, SOFT_HIT = 0, 1, 2

HITSTATS_FIELDS = ['mode', 'policy', 'seed', 'requests', 'full_hits', 'soft_hits', 'misses',
                   'utility', 'expensive_accesses']


@dataclass(frozen=True, eq=False)
class RequestStream:
    time: np.ndarray
    user: np.ndarray
    content: np.ndarray
    rate: float
    seed: object = None

    def __len__(self):
        return self.time.size


def make_requests(catalog, users, horizon, rate=None, n_requests=None, ttl=0.0, seed=None):
    """Poisson request arrivals per user with contents drawn from the catalog.

    Either ``rate`` (requests per user per second) or an exact total
    ``n_requests`` is given. Only arrivals whose deadline ``t + ttl``
    falls inside the horizon are generated.
    """
    if (rate is None) == (n_requests is None):
        raise InvalidParameter("give exactly one of rate or n_requests")
    span = horizon - ttl
    if span <= 0 or users < 1:
        raise InvalidParameter("horizon must exceed ttl and users must be >= 1")
    rng = np.random.default_rng(seed)
    if n_requests is None:
        n = rng.poisson(rate * users * span)
    else:
        n = int(n_requests)
        rate = n / (users * span)
    t = np.sort(rng.uniform(0.0, span, size=n))
    u = rng.integers(0, users, size=n)
    k = rng.choice(catalog.K, size=n, p=catalog.popularity)
    return RequestStream(t, u, k, float(rate), seed)


@dataclass(frozen=True, eq=False)
class CacheAssignment:
    """Cell-by-content storage: ``full[m, i]`` and partial fractions ``partial[m, i]``."""

    full: np.ndarray
    partial: np.ndarray
    C: int

    @property
    def cells(self):
        return self.full.shape[0]

    @property
    def K(self):
        return self.full.shape[1]

    def stored(self, cell):
        return set(np.flatnonzero(self.full[cell]).tolist())

    def holders(self):
        return self.full.sum(axis=0) + (self.partial > 0).sum(axis=0)

    def load(self):
        """Slots used per cell (a partial copy counts its size fraction)."""
        return self.full.sum(axis=1) + self.partial.sum(axis=1)


def assign_caches(placement, seed=None, related=None, popularity=None, max_passes=20):
    """Realize replica counts as a concrete cell-to-content map.

    Contents are taken in decreasing replica count (random order among
    equals) and each copy goes to a distinct cell with the most free
    space, ties broken at random. Free space then never differs by more
    than one slot between cells, so any ``n_i <= M`` with
    ``sum(n) <= M C`` fits. Partial copies are placed last, largest
    first, into the emptiest cell not already holding the content.

    Parameters
    ----------
    placement : PlacementVector
        Integer replica counts (optionally with partial fractions).
    seed : int or SeedSequence, optional
    related : UtilityGraph, optional
        When given, moves and swaps of full copies between cells then
        separate contents that serve the same requests: ``a`` and ``b``
        sharing a cell costs ``sum_i p_i`` over contents ``i`` that accept
        both. Replica counts and the capacity bound are kept.
    popularity : array_like, optional
        Weights ``p_i`` for that cost; uniform when omitted.
    max_passes : int
        Bound on improvement sweeps.
    """
    if not placement.is_integer():
        raise AssignmentError("integerize the placement before assigning it")
    M, C = placement.M, placement.C
    n = placement.n.astype(np.int64)
    K = n.size
    rng = np.random.default_rng(seed)
    full = np.zeros((M, K), dtype=bool)
    partial = np.zeros((M, K))
    free = np.full(M, float(C))
    tie = rng.permutation(K)
    for i in np.lexsort((tie, -n)):
        if n[i] == 0:
            break
        order = np.lexsort((rng.random(M), -free))
        pick = order[:n[i]]
        if np.any(free[pick] < 1 - 1e-12):
            raise AssignmentError(f"no room for {n[i]} copies of content {i}")
        full[pick, i] = True
        free[pick] -= 1
    if related is not None:
        _spread_related(full, free, related, popularity, rng, max_passes)
    if placement.partial is not None:
        frac = placement.partial
        for i in np.lexsort((np.arange(K), -frac)):
            if frac[i] <= 0:
                break
            room = np.where(full[:, i], -np.inf, free)
            order = np.lexsort((rng.random(M), -room))
            m = order[0]
            if room[m] < frac[i] - 1e-12:
                raise AssignmentError(f"no cell has room for a {frac[i]:.3f} copy of content {i}")
            partial[m, i] = frac[i]
            free[m] -= frac[i]
    full.flags.writeable = False
    partial.flags.writeable = False
    return CacheAssignment(full, partial, C)


def _overlap_weights(U, stored, popularity):
    """``W[a, b] = sum_i p_i [a, b both acceptable for i]`` over stored contents."""
    B = U.indicator()[:, stored]
    p = np.ones(U.K) if popularity is None else np.asarray(popularity, dtype=float)
    W = (B.T @ B.multiply(p[:, None]).tocsr()).toarray()
    np.fill_diagonal(W, 0.0)
    return W


def _spread_related(full, free, U, popularity, rng, max_passes):
    """Local search over copy moves and swaps; updates ``full`` and ``free`` in place."""
    stored = np.flatnonzero(full.any(axis=0))
    if stored.size < 2:
        return
    W = _overlap_weights(U, stored, popularity)
    if not W.any():
        return
    X = full[:, stored].copy()
    conf = X.astype(float) @ W
    tol = 1e-12 * W.max()
    for _ in range(max_passes):
        improved = False
        cand = np.argwhere(X & (conf > tol))
        for m, i in cand[rng.permutation(len(cand))]:
            if not X[m, i] or conf[m, i] <= tol:
                continue
            targets = ~X[:, i]
            # plain move into a cell with a free slot
            move = np.where(targets & (free >= 1 - 1e-12), conf[:, i] - conf[m, i], np.inf)
            # swap with a copy of k that m lacks
            ok = X & ~X[m][None, :] & targets[:, None]
            swap = np.where(ok, conf[:, [i]] - W[i][None, :] - conf[m, i]
                            + conf[m][None, :] - W[:, i][None, :] - conf, np.inf)
            m2, k = np.unravel_index(np.argmin(swap), swap.shape)
            m_move = int(np.argmin(move))
            if move[m_move] < -tol and move[m_move] <= swap[m2, k]:
                X[m, i], X[m_move, i] = False, True
                conf[m] -= W[i]
                conf[m_move] += W[i]
                free[m] += 1
                free[m_move] -= 1
            elif swap[m2, k] < -tol:
                X[m, i] = X[m2, k] = False
                X[m2, i] = X[m, k] = True
                conf[m] += W[k] - W[i]
                conf[m2] += W[i] - W[k]
            else:
                continue
            improved = True
        if not improved:
            break
    full[:, stored] = X


@dataclass
class HitStats:
    """Outcome counters of one simulation run."""

    full_hits: int
    soft_hits: int
    misses: int
    utility_sum: float
    expensive_accesses: float
    soft_utility: float
    requests_by_content: np.ndarray
    hits_by_content: np.ndarray

    @property
    def requests(self):
        return self.full_hits + self.soft_hits + self.misses

    @property
    def hit_ratio(self):
        return (self.full_hits + self.soft_hits) / self.requests if self.requests else float('nan')

    @property
    def mean_utility(self):
        return self.utility_sum / self.requests if self.requests else float('nan')

    @property
    def hit_ratio_se(self):
        h = self.hit_ratio
        return float(np.sqrt(h * (1 - h) / self.requests))

    @property
    def utility_se(self):
        n = self.requests
        second = (self.full_hits + self.soft_utility ** 2 * self.soft_hits) / n
        var = max(second - self.mean_utility ** 2, 0.0)
        return float(np.sqrt(var / n))

    def row(self, mode, policy, seed):
        return {
            'mode': mode, 'policy': policy, 'seed': seed, 'requests': self.requests,
            'full_hits': self.full_hits, 'soft_hits': self.soft_hits, 'misses': self.misses,
            'utility': repr(float(self.utility_sum)),
            'expensive_accesses': repr(float(self.expensive_accesses)),
        }


def _related_holders(assignment, U):
    """``rel[m, i]``: cell ``m`` holds a full copy of some ``j`` in ``R_i``."""
    A = U.adjacency()
    return np.asarray((A @ assignment.full.T.astype(float)).T > 0)


def _first_cell(mask, F):
    """Earliest meeting time among masked cells and the cell achieving it."""
    t = np.where(mask, F, np.inf)
    cell = np.argmin(t, axis=1)
    return t[np.arange(t.shape[0]), cell], cell


def request_outcomes(encounters, contents, assignment, U, mode, c=None):
    """Per-request outcome codes (0 miss, 1 full, 2 soft) and link charges.

    ``encounters`` is the ``first_encounters`` matrix of the requests.
    """
    if mode not in MODES:
        raise InvalidParameter(f"unknown mode {mode!r}")
    F = encounters
    n = contents.size
    held = (assignment.full | (assignment.partial > 0))[:, contents].T
    frac = assignment.partial[:, contents].T
    t_own, c_own = _first_cell(held, F)
    own = np.isfinite(t_own)
    rows = np.arange(n)
    own_charge = np.where(own, np.where(frac[rows, c_own] > 0, 1.0 - frac[rows, c_own], 0.0), 0.0)
    outcome = np.full(n, MISS, dtype=np.int8)
    charge = np.ones(n)
    if mode == 'none':
        outcome[own] = FULL_HIT
        charge[own] = own_charge[own]
        return outcome, charge
    rel = _related_holders(assignment, U)[:, contents].T
    if mode == 'sch1':
        t_rel, c_rel = _first_cell(rel, F)
        has_rel = np.isfinite(t_rel)
        take_own = own & (~has_rel | (t_own < t_rel) | ((t_own == t_rel) & (c_own <= c_rel)))
        soft = has_rel & ~take_own
    else:
        take_own = own
        soft = ~own & np.any(rel & np.isfinite(F), axis=1)
    outcome[take_own] = FULL_HIT
    charge[take_own] = own_charge[take_own]
    outcome[soft] = SOFT_HIT
    charge[soft] = 0.0
    return outcome, charge


def _soft_utility(mode, U, c):
    if mode == 'none':
        return 0.0
    if mode == 'sch1':
        return 1.0
    if c is None:
        if U.case != 2:
            raise InvalidParameter("sch2 mode needs c or a Case 2 graph")
        c = U.c
    return float(c)


def _aggregate(outcome, charge, contents, K, soft_u):
    full = int(np.count_nonzero(outcome == FULL_HIT))
    soft = int(np.count_nonzero(outcome == SOFT_HIT))
    miss = int(outcome.size - full - soft)
    return HitStats(
        full_hits=full, soft_hits=soft, misses=miss,
        utility_sum=full + soft_u * soft,
        expensive_accesses=float(charge.sum()),
        soft_utility=soft_u,
        requests_by_content=np.bincount(contents, minlength=K),
        hits_by_content=np.bincount(contents[outcome != MISS], minlength=K),
    )


def simulate(trace, assignment, requests, U, mode='none', ttl=None, c=None, encounters=None):
    """Run the delayed-access protocol over a trace.

    Parameters
    ----------
    trace : ContactTrace
    assignment : CacheAssignment
    requests : RequestStream
    U : UtilityGraph
        Relation graph (only its rows are used; ``c`` defaults to ``U.c``).
    mode : {'none', 'sch1', 'sch2'}
    ttl : float
        Access deadline in seconds.
    encounters : ndarray, optional
        Precomputed ``first_encounters(trace, requests.time, requests.user, ttl)``.

    Returns
    -------
    HitStats
    """
    if assignment.cells != trace.cells or assignment.K != U.K:
        raise InvalidParameter("trace, assignment and graph dimensions disagree")
    soft_u = _soft_utility(mode, U, c)
    if encounters is None:
        if ttl is None:
            raise InvalidParameter("ttl is required")
        encounters = first_encounters(trace, requests.time, requests.user, ttl)
    outcome, charge = request_outcomes(encounters, requests.content, assignment, U, mode, c)
    return _aggregate(outcome, charge, requests.content, U.K, soft_u)


def holders_disjoint(assignment, U):
    """True when the replica-count objectives are exact for this assignment.

    That holds when, for every content ``i``, no cell stores two full
    copies from ``{i} | R_i``, so each acceptable copy sits in its own cell.
    """
    stored = np.flatnonzero(assignment.full.any(axis=0))
    if stored.size < 2:
        return True
    W = _overlap_weights(U, stored, None)
    X = assignment.full[:, stored]
    return not np.any(X & ((X.astype(float) @ W) > 0))


def exact_hit_probability(assignment, U, model, mode='none', c=None):
    """Per-content success probability for a concrete assignment.

    Under independent exponential meetings a request for ``i`` succeeds
    when the user meets one of the acceptable cells; this counts each
    cell once, so it reduces to the pure replica-count objectives exactly
    when ``holders_disjoint`` holds. For ``sch2`` the value is the
    expected utility.
    """
    a = model.lam_t if isinstance(model, AccessModel) else float(model)
    own = assignment.full | (assignment.partial > 0)
    h_own = own.sum(axis=0)
    p_own = -np.expm1(-a * h_own)
    if mode == 'none':
        return p_own
    rel = _related_holders(assignment, U)
    if mode == 'sch1':
        return -np.expm1(-a * (own | rel).sum(axis=0))
    soft_u = _soft_utility(mode, U, c)
    h_rel_only = (rel & ~own).sum(axis=0)
    return p_own + soft_u * np.exp(-a * h_own) * -np.expm1(-a * h_rel_only)


def exact_objective(catalog, assignment, U, model, mode='none', c=None):
    return float(np.dot(catalog.popularity,
                        exact_hit_probability(assignment, U, model, mode, c)))


@dataclass(frozen=True)
class RunRecord:
    mode: str
    policy: str
    seed: object
    stats: HitStats


@dataclass(frozen=True)
class Comparison:
    runs: list
    summary: list
    placements: dict


def policy_placements(catalog, U, model, M, C, policies=POLICIES, c=0.5,
                      integer_mode='round'):
    """Continuous and deployable placements for each policy.

    ``base`` is the water-filling optimum; ``sch1``/``sch2`` maximize the
    Case 1/Case 2 objectives over the rows of ``U``.
    """
    out = {}
    base = solve_baseline(catalog, model, M, C)
    for pol in policies:
        if pol == 'base':
            pv, rep = base
        elif pol == 'sch1':
            pv, rep = solve_u_aware_case1(catalog, U.with_case(1), model, M, C, start=base[0].n)
        elif pol == 'sch2':
            pv, rep = solve_u_aware_case2(catalog, U.with_case(2, c), model, M, C,
                                          start=base[0].n)
        else:
            raise InvalidParameter(f"unknown policy {pol!r}")
        out[pol] = (pv, integerize(pv, integer_mode), rep)
    return out


def summarize_runs(runs, keys=('mode', 'policy')):
    """Mean and standard error of hit ratio and utility per group.

    The standard error is taken across seeds when there are at least two,
    otherwise from the single run's binomial/utility variance.
    """
    groups = {}
    for r in runs:
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r.stats)
    rows = []
    for key, stats in groups.items():
        h = np.array([s.hit_ratio for s in stats])
        u = np.array([s.mean_utility for s in stats])
        if len(stats) > 1:
            h_se = h.std(ddof=1) / np.sqrt(len(stats))
            u_se = u.std(ddof=1) / np.sqrt(len(stats))
        else:
            h_se, u_se = stats[0].hit_ratio_se, stats[0].utility_se
        row = dict(zip(keys, key))
        row.update(hit_ratio=float(h.mean()), hit_ratio_se=float(h_se),
                   utility=float(u.mean()), utility_se=float(u_se), seeds=len(stats))
        rows.append(row)
    return rows


def compare_modes(trace, catalog, U, model, M, C, ttl, seeds, n_requests=20000,
                  modes=MODES, policies=POLICIES, c=0.5, integer_mode='round'):
    """Simulate every access mode under every placement policy.

    Placements are solved once; each seed draws fresh requests and a fresh
    cell assignment. All modes of one seed see the same requests.

    Returns
    -------
    Comparison
        ``runs`` holds per-seed RunRecords, ``summary`` the mean and
        standard error per (mode, policy).
    """
    if not isinstance(model, AccessModel):
        raise InvalidParameter("model must be an AccessModel")
    places = policy_placements(catalog, U, model, M, C, policies, c, integer_mode)
    runs = []
    for seed in seeds:
        ss = np.random.SeedSequence(seed)
        req_seed, asg_seed = ss.spawn(2)
        req = make_requests(catalog, trace.users, trace.horizon, n_requests=n_requests,
                            ttl=ttl, seed=req_seed)
        F = first_encounters(trace, req.time, req.user, ttl)
        for pol in policies:
            asg = assign_caches(places[pol][1], seed=asg_seed, related=U,
                                popularity=catalog.popularity)
            for mode in modes:
                stats = simulate(trace, asg, req, U, mode, ttl, c=c, encounters=F)
                runs.append(RunRecord(mode, pol, seed, stats))
    return Comparison(runs, summarize_runs(runs), places)


def write_hitstats_csv(path, runs, extra=None):
    """Write RunRecords as ``mode,policy,seed,requests,...`` rows."""
    extra = extra or {}
    cols = list(extra) + HITSTATS_FIELDS
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in runs:
            row = dict(extra)
            row.update(r.stats.row(r.mode, r.policy, r.seed))
            w.writerow(row)
