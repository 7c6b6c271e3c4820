"""Experiment driver: catalog -> graph -> trace -> placement -> simulation -> CSV."""

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..catalog import (ingest_related_graph, graph_stats, make_popularity_proportional_U,
                       make_random_U, make_zipf_catalog, proportional_L_prime,
                       synthesize_crawl, UtilityGraph)
from ..contact import estimate_lambda, exponential_trace, first_encounters, generate_tvcm_trace
from ..contact.trace import load_trace
from ..errors import ConfigurationError, SoftCacheError, StageError
from ..placement import AccessModel
from ..protocol import (HITSTATS_FIELDS, assign_caches, make_requests, policy_placements,
                        simulate)
from .config import SWEEPS, ExperimentConfig

__all__ = ['run_experiment', 'ExperimentResult', 'RESULT_FIELDS', 'SUMMARY_FIELDS',
           'SWEEP_FILES']

SWEEP_FILES = {'l_sweep': 'l_sweep.csv', 'policy_bars': 'policy_bars.csv',
               'grid': 'ttl_q_grid.csv'}

_POINT = ['config_hash', 'sweep', 'graph', 'L', 'Q', 'ttl']
RESULT_FIELDS = _POINT + HITSTATS_FIELDS + ['hit_ratio', 'mean_utility']
SUMMARY_FIELDS = _POINT + ['mode', 'policy', 'seeds', 'hit_ratio', 'hit_ratio_se',
                           'utility', 'utility_se']


class ExperimentResult(dict):
    """Rows per sweep plus output paths; behaves as ``{sweep: [row, ...]}``."""

    def __init__(self, rows, files, manifest):
        super().__init__(rows)
        self.files = files
        self.manifest = manifest


class _Stage:
    """Context manager that tags failures with the stage that raised them."""

    def __init__(self, name, config):
        self.name = name
        self.config = config

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        if isinstance(exc, (SoftCacheError, OSError, ValueError, ArithmeticError)):
            raise StageError(self.name, self.config.path, exc) from exc
        return False


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _seed_for(*parts):
    """Deterministic integer seed from a tuple of ints/strings."""
    blob = json.dumps(parts, separators=(',', ':')).encode('utf-8')
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], 'little')


class _Context:
    def __init__(self, config):
        self.config = config
        self.d = config.data
        self.graphs = {}
        self.placements = {}
        self.requests = {}
        self.resolved = {}

    # -- inputs -------------------------------------------------------------
    def load_catalog(self):
        cat = self.d['catalog']
        if 'crawl' in cat:
            opts = dict(cat['crawl'])
            out = self.config.output / 'crawl'
            K = opts.pop('K')
            edges, pops = synthesize_crawl(K, directory=out, **opts)
            self.catalog, self.dataset_graph = ingest_related_graph(edges, pops)
        elif 'edges' in cat:
            self.catalog, self.dataset_graph = ingest_related_graph(cat['edges'],
                                                                    cat['popularity'])
        else:
            self.catalog = make_zipf_catalog(cat['K'], cat['alpha'], seed=cat.get('seed'))
            self.dataset_graph = None
        self.resolved['K'] = self.catalog.K
        if self.dataset_graph is not None:
            st = graph_stats(self.dataset_graph)
            self.resolved['dataset_graph'] = {
                'mean_row_degree': st.mean_row_degree, 'min_degree': st.min_degree,
                'max_degree': st.max_degree, 'nnz': self.dataset_graph.nnz}

    def load_trace(self):
        m = self.d['model']
        kind = m['trace']
        if kind == 'tvcm':
            self.trace = generate_tvcm_trace(self.config.mobility())
        elif kind == 'exponential':
            self.trace = exponential_trace(int(m['users']), int(m.get('cells', 25)),
                                           float(m['lambda']), float(m['horizon']),
                                           seed=m.get('trace_seed', 0))
        else:
            self.trace = load_trace(kind)
        lam = m.get('lambda')
        self.lam = float(lam) if lam is not None else estimate_lambda(self.trace)
        M = self.d['capacity']['M']
        if M is None:
            M = self.trace.cells
        if M != self.trace.cells:
            raise ConfigurationError(f"capacity.M={M} but the trace has {self.trace.cells} cells")
        self.M = int(M)
        self.resolved.update(lam=self.lam, cells=self.trace.cells, users=self.trace.users,
                             horizon=self.trace.horizon, contacts=len(self.trace) // 2)

    # -- cached pieces ------------------------------------------------------
    def graph(self, cls, L):
        key = (cls, L)
        if key not in self.graphs:
            g = self.d['graph']
            case, c = g['case'], g['c'] if g['case'] == 2 else 1.0
            seed = _seed_for(g['seed'], cls, repr(float(L)))
            if cls == 'random':
                U = make_random_U(self.catalog, L, case, c, seed=seed)
            elif cls == 'proportional':
                U = make_popularity_proportional_U(self.catalog,
                                                   proportional_L_prime(self.catalog, L),
                                                   case, c, seed=seed)
            elif cls == 'empty':
                U = UtilityGraph.empty(self.catalog.K, case=case, c=c)
            elif cls == 'dataset':
                U = self.dataset_graph.with_case(case, c)
            else:
                raise ConfigurationError(f"unknown graph class {cls!r}")
            self.graphs[key] = U
            st = graph_stats(U)
            self.resolved.setdefault('graphs', {})[f"{cls}/L={L}"] = {
                'seed': seed if cls in ('random', 'proportional') else None,
                'mean_row_degree': st.mean_row_degree, 'nnz': U.nnz}
        return self.graphs[key]

    def placement(self, cls, L, Q, ttl, policies):
        key = (cls, L, Q, ttl, tuple(policies))
        if key not in self.placements:
            U = self.graph(cls, L)
            self.placements[key] = policy_placements(
                self.catalog, U, AccessModel(self.lam, ttl), self.M, Q, policies,
                c=self.d['graph']['c'], integer_mode=self.d['integer_mode'])
        return self.placements[key]

    def request_batch(self, seed, ttl):
        key = (seed, ttl)
        if key not in self.requests:
            req = make_requests(self.catalog, self.trace.users, self.trace.horizon,
                                n_requests=int(self.d['requests']), ttl=ttl,
                                seed=_seed_for('requests', seed, repr(float(ttl))))
            F = first_encounters(self.trace, req.time, req.user, ttl)
            self.requests[key] = (req, F)
        return self.requests[key]


def _points(ctx, name):
    s = ctx.config.sweep(name)
    for cls in s['classes']:
        Ls = s['L'] if cls in ('random', 'proportional') else [s['L'][0]]
        for L in Ls:
            for Q in s['Q']:
                for ttl in s['ttl']:
                    yield cls, L, Q, ttl, s['policies'], s['modes']


def _run_sweep(ctx, name, h):
    rows = []
    for cls, L, Q, ttl, policies, modes in _points(ctx, name):
        L_out = L if cls in ('random', 'proportional') else ''
        with _Stage('graph', ctx.config):
            U = ctx.graph(cls, L)
        with _Stage('placement', ctx.config):
            places = ctx.placement(cls, L, Q, ttl, policies)
        for seed in ctx.config.seeds:
            with _Stage('requests', ctx.config):
                req, F = ctx.request_batch(seed, ttl)
            for pol in policies:
                with _Stage('assign', ctx.config):
                    asg = assign_caches(places[pol][1], related=U,
                                        popularity=ctx.catalog.popularity,
                                        seed=_seed_for('assign', seed, cls, repr(float(L)), Q,
                                                       repr(float(ttl)), pol))
                for mode in modes:
                    with _Stage('simulate', ctx.config):
                        st = simulate(ctx.trace, asg, req, U, mode, ttl,
                                      c=ctx.d['graph']['c'], encounters=F)
                    row = {'config_hash': h, 'sweep': name, 'graph': cls, 'L': L_out,
                           'Q': Q, 'ttl': ttl}
                    row.update(st.row(mode, pol, seed))
                    row['hit_ratio'] = repr(float(st.hit_ratio))
                    row['mean_utility'] = repr(float(st.mean_utility))
                    rows.append(row)
    return rows


def _summary(rows):
    groups = {}
    for r in rows:
        key = tuple(r[k] for k in _POINT + ['mode', 'policy'])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        n = np.array([r['requests'] for r in rs], dtype=float)
        h = np.array([float(r['hit_ratio']) for r in rs])
        u = np.array([float(r['mean_utility']) for r in rs])
        if len(rs) > 1:
            h_se = h.std(ddof=1) / np.sqrt(len(rs))
            u_se = u.std(ddof=1) / np.sqrt(len(rs))
        else:
            h_se = np.sqrt(h[0] * (1 - h[0]) / n[0])
            u_se = np.nan
        row = dict(zip(_POINT + ['mode', 'policy'], key))
        row.update(seeds=len(rs), hit_ratio=repr(float(h.mean())), hit_ratio_se=repr(float(h_se)),
                   utility=repr(float(u.mean())), utility_se=repr(float(u_se)))
        out.append(row)
    return out


def _write_csv(path, fields, rows):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator='\n')
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_experiment(config):
    """Run every configured sweep and write its result tables.

    Writes ``l_sweep.csv``, ``policy_bars.csv`` and ``ttl_q_grid.csv`` (one
    row per point, mode, policy and seed, whichever sweeps are
    configured), ``summary.csv`` (mean and standard error over seeds) and
    ``manifest.json`` (config hash, seeds, versions, resolved parameters
    and file digests) into the output directory.

    Parameters
    ----------
    config : ExperimentConfig or dict

    Returns
    -------
    ExperimentResult
        ``{sweep: rows}`` with ``.files`` and ``.manifest``.

    Raises
    ------
    StageError
        Wrapping the first failure, tagged with its stage and the config path.
    """
    if not isinstance(config, ExperimentConfig):
        with _Stage('config', ExperimentConfig({})):
            config = ExperimentConfig(config)
    ctx = _Context(config)
    h = config.config_hash()
    with _Stage('output', config):
        config.output.mkdir(parents=True, exist_ok=True)
    with _Stage('catalog', config):
        ctx.load_catalog()
    with _Stage('trace', config):
        ctx.load_trace()
    rows, files = {}, {}
    every = []
    for name in SWEEPS:
        if name not in config.data['sweeps']:
            continue
        rows[name] = _run_sweep(ctx, name, h)
        every.extend(rows[name])
        with _Stage('write', config):
            path = config.output / SWEEP_FILES[name]
            _write_csv(path, RESULT_FIELDS, rows[name])
            files[name] = path
    with _Stage('write', config):
        path = config.output / 'summary.csv'
        _write_csv(path, SUMMARY_FIELDS, _summary(every))
        files['summary'] = path
        manifest = {
            'config_hash': h,
            'config_path': config.path,
            'seeds': config.seeds,
            'versions': {'softcache': __version__, 'numpy': np.__version__,
                         'scipy': scipy.__version__, 'python': platform.python_version()},
            'resolved': ctx.resolved,
            'config': config.data,
            'files': {k: {'path': Path(v).name, 'sha256': _sha256(v)} for k, v in files.items()},
        }
        path = config.output / 'manifest.json'
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + '\n',
                        encoding='utf-8')
        files['manifest'] = path
    return ExperimentResult(rows, files, manifest)

