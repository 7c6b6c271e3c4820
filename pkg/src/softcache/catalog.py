"""Content catalogs, popularity laws and content-relation graphs.

A catalog is a popularity vector over ``K`` equal-size contents. A relation
graph stores, for every content ``i``, the sorted indices of the contents
that may stand in for it (the diagonal ``u_ii = 1`` is implicit and never
stored). Case 1 graphs give full utility to any related content, Case 2
graphs give a constant utility ``c`` in (0, 1).
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.optimize import brentq

from .errors import InvalidDataset, InvalidParameter, ParseError

__all__ = [
    'ContentCatalog',
    'UtilityGraph',
    'GraphStats',
    'make_zipf_catalog',
    'make_uniform_catalog',
    'make_random_U',
    'make_popularity_proportional_U',
    'ingest_related_graph',
    'proportional_L_prime',
    'graph_stats',
    'synthesize_crawl',
    'write_id_map',
    'save_catalog',
    'load_catalog',
    'save_graph',
    'load_graph',
]

_NORM_TOL = 1e-12


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ContentCatalog:
    """Popularity vector over ``K`` contents.

    ``ids`` optionally carries the external identifiers of the contents
    (index ``i`` is ``ids[i]``); it is set by dataset ingestion.
    """

    popularity: np.ndarray
    ids: tuple = None

    def __post_init__(self):
        p = np.asarray(self.popularity, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise InvalidParameter("popularity must be a nonempty vector")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise InvalidParameter("every popularity value must be > 0")
        p = p / p.sum()
        if abs(p.sum() - 1.0) > _NORM_TOL:
            p = p / math.fsum(p)
        object.__setattr__(self, 'popularity', _frozen(p, float))
        if self.ids is not None:
            ids = tuple(str(x) for x in self.ids)
            if len(ids) != p.size:
                raise InvalidParameter("ids must match the number of contents")
            object.__setattr__(self, 'ids', ids)

    @property
    def K(self):
        return self.popularity.size

    content_count = K

    def __len__(self):
        return self.K


@dataclass(frozen=True, eq=False)
class UtilityGraph:
    """Sparse content-relation matrix ``U`` with its case tag.

    Parameters
    ----------
    rows : sequence of int arrays
        ``rows[i]`` lists the related contents of ``i`` (no self index, no
        duplicates). Stored sorted.
    case : {1, 2}
        Case 1: related contents have utility 1. Case 2: utility ``c``.
    c : float
        Soft-hit utility. Forced to 1.0 for Case 1; must lie in (0, 1)
        for Case 2.
    """

    rows: tuple
    case: int = 1
    c: float = 1.0
    _matrix: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        K = len(self.rows)
        if K < 1:
            raise InvalidParameter("a utility graph needs at least one content")
        clean = []
        for i, r in enumerate(self.rows):
            r = np.asarray(r, dtype=np.int64).ravel()
            if r.size:
                if r.min() < 0 or r.max() >= K:
                    raise InvalidParameter(f"row {i} has an index outside 0..{K - 1}")
                if np.any(r == i):
                    raise InvalidParameter(f"row {i} contains its own index")
                r = np.sort(r)
                if np.any(np.diff(r) == 0):
                    raise InvalidParameter(f"row {i} has duplicate entries")
            clean.append(_frozen(r, np.int64))
        object.__setattr__(self, 'rows', tuple(clean))
        if self.case == 1:
            object.__setattr__(self, 'c', 1.0)
        elif self.case == 2:
            if not 0.0 < self.c < 1.0:
                raise InvalidParameter("Case 2 needs a soft-hit utility 0 < c < 1")
            object.__setattr__(self, 'c', float(self.c))
        else:
            raise InvalidParameter(f"unknown case {self.case!r}")

    @property
    def K(self):
        return len(self.rows)

    @property
    def degrees(self):
        return np.array([r.size for r in self.rows], dtype=np.int64)

    @property
    def nnz(self):
        return int(self.degrees.sum())

    def adjacency(self):
        """Off-diagonal 0/1 indicator matrix as CSR (row i -> R_i)."""
        if self._matrix is None:
            K = self.K
            indptr = np.zeros(K + 1, dtype=np.int64)
            indptr[1:] = np.cumsum(self.degrees)
            indices = np.concatenate(self.rows) if self.nnz else np.zeros(0, np.int64)
            A = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(K, K))
            object.__setattr__(self, '_matrix', A)
        return self._matrix

    def indicator(self):
        """``I`` with ``I_ij = 1`` iff ``u_ij > 0``, diagonal included."""
        return (self.adjacency() + sp.identity(self.K, format='csr')).tocsr()

    def utility_matrix(self):
        """Dense-free CSR of the utilities ``u_ij`` including ``u_ii = 1``."""
        return (self.c * self.adjacency() + sp.identity(self.K, format='csr')).tocsr()

    def with_case(self, case, c=1.0):
        return UtilityGraph(self.rows, case=case, c=c)

    def symmetrized(self):
        A = self.adjacency()
        S = ((A + A.T) > 0).tocsr()
        return UtilityGraph(_rows_from_csr(S), case=self.case, c=self.c)

    def is_symmetric(self):
        A = self.adjacency()
        return (A != A.T).nnz == 0

    def add_edges(self, pairs):
        """Return a copy with the directed edges ``(i, j)`` added."""
        sets = [set(r.tolist()) for r in self.rows]
        for i, j in pairs:
            if i != j:
                sets[i].add(j)
        return UtilityGraph([sorted(s) for s in sets], case=self.case, c=self.c)

    @classmethod
    def empty(cls, K, case=1, c=1.0):
        return cls([()] * K, case=case, c=c)

    @classmethod
    def from_edges(cls, K, pairs, case=1, c=1.0, symmetric=False):
        sets = [set() for _ in range(K)]
        for i, j in pairs:
            if i == j:
                continue
            sets[i].add(j)
            if symmetric:
                sets[j].add(i)
        return cls([sorted(s) for s in sets], case=case, c=c)


def _rows_from_csr(S):
    S = sp.csr_matrix(S)
    S.setdiag(0)
    S.eliminate_zeros()
    S.sort_indices()
    return [S.indices[S.indptr[i]:S.indptr[i + 1]] for i in range(S.shape[0])]


@dataclass(frozen=True)
class GraphStats:
    mean_row_degree: float
    min_degree: int
    max_degree: int
    connected_component_sizes: list


def _check_case(case, c):
    if case not in (1, 2):
        raise InvalidParameter(f"unknown case {case!r}")
    if case == 2 and not 0.0 < c < 1.0:
        raise InvalidParameter("Case 2 needs 0 < c < 1")


def make_zipf_catalog(K, alpha, seed=None, permute=True):
    """Zipf popularity ``p_i ∝ rank_i ** -alpha``.

    Ranks are a seeded random permutation of ``1..K`` unless ``permute`` is
    False, in which case content ``i`` has rank ``i + 1``.
    """
    if int(K) != K or K < 1:
        raise InvalidParameter("K must be a positive integer")
    if not alpha > 0:
        raise InvalidParameter("alpha must be > 0")
    K = int(K)
    ranks = np.arange(1, K + 1, dtype=float)
    if permute:
        ranks = np.random.default_rng(seed).permutation(ranks)
    return ContentCatalog(ranks ** -float(alpha))


def make_uniform_catalog(K):
    if int(K) != K or K < 1:
        raise InvalidParameter("K must be a positive integer")
    return ContentCatalog(np.full(int(K), 1.0 / K))


def make_random_U(catalog, L, case=1, c=1.0, seed=None, symmetrize=True):
    """Random relation graph with mean row degree ``L``.

    Each unordered pair is linked with probability ``L / (K - 1)`` (capped
    at 1). With ``symmetrize=False`` every ordered pair is drawn
    independently instead and stored in its source row only.
    """
    K = catalog.K if hasattr(catalog, 'K') else int(catalog)
    _check_case(case, c)
    if not 0 <= L <= max(K - 1, 0):
        raise InvalidParameter(f"L must lie in [0, K-1] = [0, {K - 1}]")
    if K == 1 or L == 0:
        return UtilityGraph.empty(K, case=case, c=c)
    prob = min(1.0, L / (K - 1))
    rng = np.random.default_rng(seed)
    if symmetrize:
        iu, ju = np.triu_indices(K, k=1)
        keep = rng.random(iu.size) < prob
        i, j = iu[keep], ju[keep]
        rows_i = np.concatenate([i, j])
        cols = np.concatenate([j, i])
    else:
        draw = rng.random((K, K)) < prob
        np.fill_diagonal(draw, False)
        rows_i, cols = np.nonzero(draw)
    A = sp.csr_matrix((np.ones(rows_i.size), (rows_i, cols)), shape=(K, K))
    return UtilityGraph(_rows_from_csr(A), case=case, c=c)


def make_popularity_proportional_U(catalog, L_prime, case=1, c=1.0, seed=None,
                                   symmetrize=False):
    """Directed relation graph where ``i -> j`` has probability ``L' p_j``.

    Probabilities are clamped to [0, 1]. Popular contents therefore appear
    in many rows. Pass ``symmetrize=True`` to add every reverse edge.
    """
    _check_case(case, c)
    if not L_prime >= 0:
        raise InvalidParameter("L_prime must be >= 0")
    K = catalog.K
    if L_prime == 0 or K == 1:
        return UtilityGraph.empty(K, case=case, c=c)
    prob = np.clip(L_prime * catalog.popularity, 0.0, 1.0)
    rng = np.random.default_rng(seed)
    draw = rng.random((K, K)) < prob[None, :]
    np.fill_diagonal(draw, False)
    A = sp.csr_matrix(draw.astype(float))
    if symmetrize:
        A = ((A + A.T) > 0).astype(float)
    return UtilityGraph(_rows_from_csr(A), case=case, c=c)


def proportional_L_prime(catalog, L):
    """``L'`` whose popularity-proportional graph has mean row degree ``L``.

    The expected degree of row ``i`` is ``sum_{j != i} min(1, L' p_j)``;
    its mean over rows is increasing in ``L'`` and solved by root finding.
    """
    K = catalog.K
    if not 0 <= L < K - 1:
        raise InvalidParameter(f"L must lie in [0, K-1) = [0, {K - 1})")
    if L == 0:
        return 0.0
    p = catalog.popularity

    def excess(lp):
        q = np.minimum(1.0, lp * p)
        return q.sum() * (1.0 - 1.0 / K) - L

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    return float(brentq(excess, 0.0, hi, xtol=1e-12, rtol=1e-12))


def graph_stats(U):
    """Exact degree statistics and component sizes of the symmetrized graph."""
    deg = U.degrees
    A = U.adjacency()
    _, labels = connected_components(A, directed=True, connection='weak')
    sizes = sorted(np.bincount(labels).tolist(), reverse=True)
    return GraphStats(
        mean_row_degree=float(deg.sum()) / U.K,
        min_degree=int(deg.min()),
        max_degree=int(deg.max()),
        connected_component_sizes=sizes,
    )


def _data_lines(path):
    with open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith('#'):
                continue
            yield lineno, s.split()


def ingest_related_graph(edge_file, popularity_file):
    """Load a related-content crawl into a catalog and a Case 1 graph.

    Contents with zero or missing popularity are dropped, every listed
    relation is made mutual, and only the largest connected component is
    kept (ties go to the component holding the smallest id). Ids map to
    indices in order of first appearance in ``edge_file``.

    Returns
    -------
    catalog : ContentCatalog
        Renormalized popularity; ``catalog.ids`` holds the original ids.
    graph : UtilityGraph
        Symmetric Case 1 relation graph.
    """
    views = {}
    for lineno, tok in _data_lines(popularity_file):
        if len(tok) != 2:
            raise ParseError(popularity_file, lineno, "expected 'id count'")
        try:
            count = float(tok[1])
        except ValueError:
            raise ParseError(popularity_file, lineno, f"bad count {tok[1]!r}") from None
        if not np.isfinite(count) or count < 0:
            raise ParseError(popularity_file, lineno, "count must be finite and >= 0")
        if tok[0] in views:
            raise ParseError(popularity_file, lineno, f"duplicate id {tok[0]!r}")
        views[tok[0]] = count

    order = {}
    edges = []
    for lineno, tok in _data_lines(edge_file):
        if len(tok) != 2:
            raise ParseError(edge_file, lineno, "expected 'id id'")
        a, b = tok
        if a == b or views.get(a, 0) <= 0 or views.get(b, 0) <= 0:
            continue
        for x in (a, b):
            order.setdefault(x, len(order))
        edges.append((order[a], order[b]))

    if not edges:
        raise InvalidDataset("no relation survives popularity filtering")
    n = len(order)
    ids = sorted(order, key=order.get)
    e = np.array(edges)
    A = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    A = ((A + A.T) > 0).astype(float).tocsr()
    _, labels = connected_components(A, directed=False)
    sizes = np.bincount(labels)
    best = sizes.max()
    candidates = [k for k in range(sizes.size) if sizes[k] == best]
    if len(candidates) > 1:
        smallest = {}
        for idx, lab in enumerate(labels):
            if lab in candidates and (lab not in smallest or ids[idx] < smallest[lab]):
                smallest[lab] = ids[idx]
        keep_label = min(candidates, key=lambda k: smallest[k])
    else:
        keep_label = candidates[0]
    if best < 2:
        raise InvalidDataset("largest connected component is empty")
    keep = np.flatnonzero(labels == keep_label)
    sub = A[keep][:, keep]
    kept_ids = [ids[k] for k in keep]
    catalog = ContentCatalog([views[x] for x in kept_ids], ids=kept_ids)
    return catalog, UtilityGraph(_rows_from_csr(sub), case=1)


def write_id_map(catalog, path):
    """Write the ``id,index`` sidecar for an ingested catalog."""
    if catalog.ids is None:
        raise InvalidParameter("catalog carries no external ids")
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh)
        w.writerow(['id', 'index'])
        for k, x in enumerate(catalog.ids):
            w.writerow([x, k])


def synthesize_crawl(K, related_per_video=3, alpha=0.8, popular_bias=0.5,
                     zero_fraction=0.02, seed=None, directory='.'):
    """Write a synthetic related-video crawl in the ingest file format.

    Views follow a Zipf law of exponent ``alpha`` over a random ranking; a
    small ``zero_fraction`` of videos get zero views (dropped at ingest).
    Each video lists ``related_per_video`` related videos, each drawn
    popularity-weighted with probability ``popular_bias`` and uniformly
    otherwise. Ids are strings ``v00000`` style.

    Returns
    -------
    (edge_path, popularity_path)
    """
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = [f"v{k:05d}" for k in range(K)]
    ranks = rng.permutation(np.arange(1, K + 1))
    views = np.floor(1e6 * ranks ** -float(alpha)).astype(np.int64) + 1
    views[rng.random(K) < zero_fraction] = 0
    weights = views / views.sum()
    edge_path = directory / 'edges.txt'
    pop_path = directory / 'popularity.txt'
    with open(edge_path, 'w', encoding='utf-8') as fh:
        fh.write("# source related\n")
        for i in range(K):
            picked = set()
            while len(picked) < related_per_video:
                if rng.random() < popular_bias:
                    j = int(rng.choice(K, p=weights))
                else:
                    j = int(rng.integers(K))
                if j != i:
                    picked.add(j)
            for j in sorted(picked):
                fh.write(f"{ids[i]} {ids[j]}\n")
    with open(pop_path, 'w', encoding='utf-8') as fh:
        fh.write("# id views\n")
        for i in range(K):
            fh.write(f"{ids[i]} {views[i]}\n")
    return edge_path, pop_path


def save_catalog(catalog, path):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh)
        w.writerow(['content_index', 'popularity'] + (['id'] if catalog.ids else []))
        for k, p in enumerate(catalog.popularity):
            row = [k, repr(float(p))]
            if catalog.ids:
                row.append(catalog.ids[k])
            w.writerow(row)


def load_catalog(path):
    with open(path, newline='', encoding='utf-8') as fh:
        rows = list(csv.DictReader(fh))
    p = [float(r['popularity']) for r in rows]
    ids = [r['id'] for r in rows] if rows and 'id' in rows[0] else None
    return ContentCatalog(p, ids=ids)


def save_graph(U, path):
    """Edge list ``i j`` with a ``# K= case= c=`` header line."""
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(f"# K={U.K} case={U.case} c={U.c!r}\n")
        for i, r in enumerate(U.rows):
            for j in r:
                fh.write(f"{i} {j}\n")


def load_graph(path):
    header = None
    pairs = []
    with open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith('#'):
                if header is None and 'K=' in s:
                    header = dict(kv.split('=') for kv in s[1:].split())
                continue
            tok = s.split()
            if len(tok) != 2:
                raise ParseError(path, lineno, "expected 'i j'")
            try:
                pairs.append((int(tok[0]), int(tok[1])))
            except ValueError:
                raise ParseError(path, lineno, "indices must be integers") from None
    if header is None:
        raise ParseError(path, 1, "missing '# K= case= c=' header")
    return UtilityGraph.from_edges(int(header['K']), pairs, case=int(header['case']),
                                   c=float(header['c']))
