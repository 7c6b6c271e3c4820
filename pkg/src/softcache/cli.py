"""Command-line entry point: ``softcache <subcommand> [options]``.

Every subcommand accepts ``--seed``, ``--config`` (a JSON file whose keys
match the long option names, or an experiment config for ``sweep``) and
``--out``. Flags given on the command line win over config values.
Failures exit with status 1 and a ``[stage]`` tagged message on stderr.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .catalog import (ingest_related_graph, load_catalog, load_graph,
                      make_popularity_proportional_U, make_random_U, make_zipf_catalog,
                      proportional_L_prime, save_catalog, save_graph, synthesize_crawl,
                      write_id_map, UtilityGraph)
from .contact import (MobilityConfig, estimate_lambda, exponential_trace,
                      generate_tvcm_trace, load_trace, save_trace)
from .errors import SoftCacheError, StageError
from .placement import AccessModel, integerize, load_placement, save_placement, save_report
from .protocol import (RunRecord, assign_caches, make_requests, policy_placements,
                       simulate, write_hitstats_csv)

__all__ = ['main', 'build_parser']


def _common(p):
    p.add_argument('--seed', type=int, help="random seed")
    p.add_argument('--config', help="JSON file with option defaults")
    p.add_argument('--out', help="output file or directory")


def build_parser():
    parser = argparse.ArgumentParser(prog='softcache', description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-catalog', help="Zipf content catalog")
    _common(p)
    p.add_argument('--K', type=int)
    p.add_argument('--alpha', type=float)

    p = sub.add_parser('gen-graph', help="synthetic relation graph")
    _common(p)
    p.add_argument('--catalog')
    p.add_argument('--kind', choices=['random', 'proportional', 'empty'])
    p.add_argument('--L', type=float, help="expected related contents per content")
    p.add_argument('--case', type=int, choices=[1, 2])
    p.add_argument('--c', type=float)

    p = sub.add_parser('ingest', help="related-content crawl to catalog and graph")
    _common(p)
    p.add_argument('--edges')
    p.add_argument('--popularity')
    p.add_argument('--synthesize', type=int, metavar='K',
                   help="write a synthetic crawl of K videos first")

    p = sub.add_parser('solve', help="optimal placement for one policy")
    _common(p)
    p.add_argument('--catalog')
    p.add_argument('--graph')
    p.add_argument('--policy', choices=['base', 'sch1', 'sch2'])
    p.add_argument('--lam', type=float, help="meeting rate per second")
    p.add_argument('--ttl', type=float, help="access deadline in seconds")
    p.add_argument('--M', type=int)
    p.add_argument('--Q', type=int, help="cache slots per cell")
    p.add_argument('--c', type=float)

    p = sub.add_parser('gen-trace', help="contact trace")
    _common(p)
    p.add_argument('--model', choices=['tvcm', 'exponential'])
    p.add_argument('--users', type=int)
    p.add_argument('--cells', type=int)
    p.add_argument('--lam', type=float)
    p.add_argument('--horizon', type=float)

    p = sub.add_parser('simulate', help="delayed access over a trace")
    _common(p)
    p.add_argument('--trace')
    p.add_argument('--catalog')
    p.add_argument('--graph')
    p.add_argument('--placement')
    p.add_argument('--Q', type=int)
    p.add_argument('--mode', choices=['none', 'sch1', 'sch2'])
    p.add_argument('--ttl', type=float)
    p.add_argument('--requests', type=int)
    p.add_argument('--c', type=float)

    p = sub.add_parser('sweep', help="run an experiment config")
    _common(p)
    p.add_argument('--preset', choices=['default'])
    p.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                   help="override a config field, e.g. capacity.Q=[5,50]")

    p = sub.add_parser('report', help="gain table from result CSVs")
    _common(p)
    p.add_argument('results', nargs='*')
    return parser


_DEFAULTS = {
    'gen-catalog': dict(K=1000, alpha=2.0, out='catalog.csv'),
    'gen-graph': dict(catalog='catalog.csv', kind='random', L=5.0, case=1, c=0.5,
                      out='graph.txt'),
    'ingest': dict(edges=None, popularity=None, synthesize=None, out='dataset'),
    'solve': dict(catalog='catalog.csv', graph=None, policy='base', lam=None, ttl=300.0,
                  M=25, Q=20, c=0.5, out='placement.csv'),
    'gen-trace': dict(model='tvcm', users=None, cells=None, lam=None, horizon=None,
                      out='trace.csv'),
    'simulate': dict(trace='trace.csv', catalog='catalog.csv', graph=None,
                     placement='placement.csv', Q=20, mode='none', ttl=300.0,
                     requests=20000, c=0.5, out='hitstats.csv'),
    'sweep': dict(out=None),
    'report': dict(out=None),
}


def _resolve(args):
    """Fill unset options from ``--config`` then from the built-in defaults."""
    conf = {}
    if args.config and args.command != 'sweep':
        with open(args.config, encoding='utf-8') as fh:
            conf = json.load(fh)
    for key, default in _DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, conf.get(key, default))
    if args.seed is None:
        args.seed = conf.get('seed')
    for key in conf:
        if not hasattr(args, key):
            setattr(args, key, conf[key])
    return args


def _graph_or_empty(path, K):
    return load_graph(path) if path else UtilityGraph.empty(K)


def cmd_gen_catalog(a):
    cat = make_zipf_catalog(a.K, a.alpha, seed=a.seed)
    save_catalog(cat, a.out)
    print(f"wrote {a.out}: K={cat.K}, top popularity {cat.popularity.max():.4f}")


def cmd_gen_graph(a):
    cat = load_catalog(a.catalog)
    c = a.c if a.case == 2 else 1.0
    if a.kind == 'random':
        U = make_random_U(cat, a.L, a.case, c, seed=a.seed)
    elif a.kind == 'proportional':
        U = make_popularity_proportional_U(cat, proportional_L_prime(cat, a.L), a.case, c,
                                           seed=a.seed)
    else:
        U = UtilityGraph.empty(cat.K, case=a.case, c=c)
    save_graph(U, a.out)
    print(f"wrote {a.out}: {U.nnz} relations, mean row degree {U.nnz / U.K:.3f}")


def cmd_ingest(a):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    edges, pops = a.edges, a.popularity
    if a.synthesize:
        edges, pops = synthesize_crawl(a.synthesize, seed=a.seed, directory=out / 'crawl')
    if not edges or not pops:
        raise SoftCacheError("ingest needs --edges and --popularity, or --synthesize K")
    cat, U = ingest_related_graph(edges, pops)
    save_catalog(cat, out / 'catalog.csv')
    save_graph(U, out / 'graph.txt')
    write_id_map(cat, out / 'id_map.csv')
    print(f"wrote {out}: K={cat.K}, {U.nnz} relations, mean row degree {U.nnz / U.K:.3f}")


def cmd_solve(a):
    cat = load_catalog(a.catalog)
    U = _graph_or_empty(a.graph, cat.K)
    if a.lam is None:
        raise SoftCacheError("--lam is required")
    model = AccessModel(a.lam, a.ttl)
    pv, pi, rep = policy_placements(cat, U, model, a.M, a.Q, [a.policy], c=a.c)[a.policy]
    save_placement(a.out, pv, pi)
    report_path = Path(a.out).with_suffix('.json')
    save_report(report_path, rep, policy=a.policy, lam=a.lam, ttl=a.ttl, M=a.M, Q=a.Q)
    print(f"wrote {a.out} and {report_path}: objective {rep.objective_value:.6f}, "
          f"{rep.iterations} iterations, KKT residual {rep.kkt_residual:.2e}")


def cmd_gen_trace(a):
    if a.model == 'tvcm':
        fields = {k: getattr(a, k) for k in ('users', 'cells', 'horizon')
                  if getattr(a, k) is not None}
        mob = getattr(a, 'mobility', None) or {}
        tr = generate_tvcm_trace(MobilityConfig(**{**mob, **fields,
                                                   'seed': a.seed if a.seed is not None else 0}))
    else:
        if a.lam is None:
            raise SoftCacheError("--lam is required for exponential traces")
        tr = exponential_trace(a.users or 60, a.cells or 25, a.lam, a.horizon or 86400.0,
                               seed=a.seed)
    save_trace(tr, a.out)
    try:
        lam = f"{estimate_lambda(tr):.4g}/s"
    except SoftCacheError:
        lam = "n/a"
    print(f"wrote {a.out}: {len(tr) // 2} contacts, estimated meeting rate {lam}")


def cmd_simulate(a):
    tr = load_trace(a.trace)
    cat = load_catalog(a.catalog)
    U = _graph_or_empty(a.graph, cat.K)
    pi = load_placement(a.placement, tr.cells, a.Q, column='n_integer')
    ss = np.random.SeedSequence(a.seed)
    req_seed, asg_seed = ss.spawn(2)
    req = make_requests(cat, tr.users, tr.horizon, n_requests=a.requests, ttl=a.ttl,
                        seed=req_seed)
    asg = assign_caches(integerize(pi), seed=asg_seed, related=U, popularity=cat.popularity)
    st = simulate(tr, asg, req, U, a.mode, a.ttl, c=a.c)
    write_hitstats_csv(a.out, [RunRecord(a.mode, 'file', a.seed, st)])
    print(f"wrote {a.out}: hit ratio {st.hit_ratio:.4f} ± {st.hit_ratio_se:.4f}, "
          f"mean utility {st.mean_utility:.4f}")
    return st


def cmd_sweep(a):
    from .harness import ExperimentConfig, apply_overrides, load_config, default_preset, \
        run_experiment
    overrides = {}
    for item in a.set:
        if '=' not in item:
            raise SoftCacheError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split('=', 1)
        overrides[k] = v
    if a.seed is not None:
        overrides['seeds'] = [a.seed]
    if a.out is not None:
        overrides['output'] = a.out
    try:
        if a.config:
            config = load_config(a.config, overrides)
        elif a.preset == 'default':
            config = ExperimentConfig(apply_overrides(default_preset(), overrides))
        else:
            raise SoftCacheError("sweep needs --config FILE or --preset default")
    except SoftCacheError as exc:
        raise StageError('config', a.config, exc) from exc
    res = run_experiment(config)
    for name, path in res.files.items():
        print(f"wrote {path}")
    return res


def cmd_report(a):
    from .harness import format_gain_table, read_results, report_gains, write_gains
    paths = list(a.results)
    if a.config and not paths:
        with open(a.config, encoding='utf-8') as fh:
            out_dir = Path(json.load(fh).get('output', 'results'))
        paths = [out_dir / 'ttl_q_grid.csv']
    if not paths:
        raise SoftCacheError("report needs result CSV paths or --config")
    rows = []
    for p in paths:
        rows.extend(read_results(p))
    gains = report_gains(rows)
    groups = {}
    for g in gains:
        groups.setdefault((g.get('sweep', ''), g.get('graph', ''), g.get('L', ''),
                           g.get('policy', '')), []).append(g)
    for (sweep, graph, L, policy), gs in groups.items():
        print(f"{sweep} graph={graph} L={L} policy={policy}")
        print(format_gain_table(gs))
    if a.out:
        write_gains(a.out, gains)
        print(f"wrote {a.out}")
    return gains


_COMMANDS = {
    'gen-catalog': cmd_gen_catalog, 'gen-graph': cmd_gen_graph, 'ingest': cmd_ingest,
    'solve': cmd_solve, 'gen-trace': cmd_gen_trace, 'simulate': cmd_simulate,
    'sweep': cmd_sweep, 'report': cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _resolve(args)
        _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"softcache {args.command}: {exc}", file=sys.stderr)
        return 1
    except (SoftCacheError, OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"softcache {args.command}: [{args.command}] {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
