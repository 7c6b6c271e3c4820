"""Relative gain of soft cache hits over plain caching, per sweep point."""

import csv

import numpy as np

from ..errors import ReportError

__all__ = ['report_gains', 'read_results', 'write_gains', 'format_gain_table', 'GAIN_FIELDS']

_NON_KEY = {'mode', 'seed', 'requests', 'full_hits', 'soft_hits', 'misses', 'utility',
            'expensive_accesses', 'hit_ratio', 'mean_utility', 'hit_ratio_se'}

GAIN_FIELDS = ['hit_none', 'hit_sch1', 'gain', 'gain_se', 'seeds']


def read_results(path):
    with open(path, newline='', encoding='utf-8') as fh:
        return list(csv.DictReader(fh))


def _hits(row):
    """``(hit ratio, requests or None)`` from counts when present."""
    n = row.get('requests')
    if n not in (None, ''):
        n = int(n)
        return (int(row['full_hits']) + int(row['soft_hits'])) / n, n
    return float(row['hit_ratio']), None


def _paired_se(h0, h1, n):
    """Delta-method SE of ``h1/h0 - 1`` for paired binary outcomes.

    Every request that hits without soft hits also hits with them, so
    ``cov = h0 (1 - h1) / n``.
    """
    if n is None or h0 <= 0 or h1 <= 0:
        return float('nan')
    rel = ((1 - h1) / h1 + (1 - h0) / h0 - 2 * (1 - h1) / h1) / n
    return float((h1 / h0) * np.sqrt(max(rel, 0.0)))


def report_gains(results):
    """Gain ``hit_sch1 / hit_none - 1`` for every point with both modes.

    Parameters
    ----------
    results : iterable of dict or str
        Result rows (as written by ``run_experiment``) or a CSV path. Rows
        are grouped by every column except the mode, seed and outcome
        counters.

    Returns
    -------
    list of dict
        The point columns plus ``hit_none``, ``hit_sch1``, ``gain``,
        ``gain_se`` and ``seeds``. With several seeds the standard error
        is taken across per-seed gains; with one seed it is propagated
        from the paired binomial counts.

    Raises
    ------
    ReportError
        When a point lacks a ``none`` or ``sch1`` run for some seed.
    """
    if isinstance(results, (str, bytes)) or hasattr(results, '__fspath__'):
        results = read_results(results)
    results = [dict(r) for r in results]
    if not results:
        raise ReportError("no result rows")
    groups = {}
    key_cols = [k for k in results[0] if k not in _NON_KEY]
    for r in results:
        if r.get('mode') not in ('none', 'sch1'):
            continue
        key = tuple((k, str(r.get(k, ''))) for k in key_cols)
        seeds = groups.setdefault(key, {})
        seeds.setdefault(str(r.get('seed', '')), {})[r['mode']] = _hits(r)
    if not groups:
        raise ReportError("no runs with mode none or sch1")
    out = []
    for key, seeds in groups.items():
        gains, h0s, h1s = [], [], []
        for seed, modes in seeds.items():
            if set(modes) != {'none', 'sch1'}:
                missing = ({'none', 'sch1'} - set(modes)).pop()
                raise ReportError(f"point {dict(key)} seed {seed!r} has no {missing!r} run")
            (h0, n0), (h1, n1) = modes['none'], modes['sch1']
            if h0 <= 0:
                raise ReportError(f"point {dict(key)} seed {seed!r} has zero hits without SCH")
            gains.append(h1 / h0 - 1)
            h0s.append(h0)
            h1s.append(h1)
        if len(gains) > 1:
            se = float(np.std(gains, ddof=1) / np.sqrt(len(gains)))
        else:
            se = _paired_se(h0s[0], h1s[0], n0 if n0 == n1 else None)
        row = dict(key)
        row.update(hit_none=float(np.mean(h0s)), hit_sch1=float(np.mean(h1s)),
                   gain=float(np.mean(gains)), gain_se=se, seeds=len(gains))
        out.append(row)
    return out


def write_gains(path, gains):
    cols = list(gains[0])
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator='\n')
        w.writeheader()
        for g in gains:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in g.items()})


def format_gain_table(gains, rows='ttl', cols='Q'):
    """Text table of gains in percent, ``rows`` down and ``cols`` across."""
    r_vals = sorted({g[rows] for g in gains}, key=_num)
    c_vals = sorted({g[cols] for g in gains}, key=_num)
    cell = {}
    for g in gains:
        cell.setdefault((g[rows], g[cols]), []).append(g)
    lines = [f"{rows:>10} | " + " | ".join(f"{cols}={c:<14}" for c in c_vals)]
    for r in r_vals:
        parts = []
        for c in c_vals:
            gs = cell.get((r, c), [])
            parts.append(" ".join(f"{100 * g['gain']:5.1f}% ±{100 * g['gain_se']:4.1f}"
                                  for g in gs).ljust(16) if gs else "-".ljust(16))
        lines.append(f"{r:>10} | " + " | ".join(parts))
    return "\n".join(lines)


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return float('inf')
