import csv
import json

import numpy as np
import pytest

from softcache.catalog import make_zipf_catalog
from softcache.cli import main
from softcache.errors import ConfigurationError, ReportError, StageError
from softcache.harness import (ExperimentConfig, apply_overrides, default_preset,
                               format_gain_table, load_config, report_gains, run_experiment)
from softcache.placement import AccessModel, g_base, integerize, solve_baseline

LAM, TTL = 1 / 1800, 300.0


def _single_point(out, **extra):
    data = {
        'catalog': {'K': 60, 'alpha': 1.0, 'seed': 3},
        'graph': {'classes': ['empty'], 'L': [0]},
        'model': {'trace': 'exponential', 'lambda': LAM, 'users': 30, 'cells': 8,
                  'horizon': 40 * 3600.0, 'trace_seed': 4, 'ttl': [TTL]},
        'capacity': {'Q': [4]},
        'policies': ['base'],
        'modes': ['none'],
        'seeds': [0],
        'requests': 40000,
        'sweeps': {'grid': {}},
        'output': str(out),
    }
    return apply_overrides(data, extra)


def _rows(path):
    with open(path, newline='') as fh:
        return list(csv.DictReader(fh))


def test_single_point_matches_g_base(tmp_path):
    res = run_experiment(_single_point(tmp_path / 'run'))
    rows = _rows(res.files['grid'])
    assert len(rows) == 1
    r = rows[0]
    cat = make_zipf_catalog(60, 1.0, seed=3)
    model = AccessModel(LAM, TTL)
    n = integerize(solve_baseline(cat, model, 8, 4)[0])
    g = g_base(cat, n, model)
    h, N = float(r['hit_ratio']), int(r['requests'])
    assert abs(h - g) <= 3 * np.sqrt(g * (1 - g) / N)


def test_rerun_is_byte_identical_and_traceable(tmp_path):
    cfg = _single_point(tmp_path / 'a', **{'graph.classes': ['random'], 'graph.L': [2],
                                           'modes': ['none', 'sch1'], 'requests': 5000})
    a = run_experiment(cfg)
    b = run_experiment(dict(cfg, output=str(tmp_path / 'b')))
    for name in ('grid', 'summary'):
        assert a.files[name].read_bytes() == b.files[name].read_bytes()
    manifest = json.loads(a.files['manifest'].read_text())
    h = manifest['config_hash']
    assert h == ExperimentConfig(cfg).config_hash()
    assert {r['config_hash'] for r in _rows(a.files['grid'])} == {h}
    assert manifest['seeds'] == [0]
    assert manifest['resolved']['K'] == 60
    assert 'numpy' in manifest['versions']


def test_stage_errors_name_the_stage(tmp_path):
    with pytest.raises(StageError) as ei:
        run_experiment(_single_point(tmp_path, **{'capacity.M': 3}))
    assert ei.value.stage == 'trace'
    with pytest.raises(StageError) as ei:
        run_experiment(_single_point(tmp_path, **{'graph.classes': ['nope']}))
    assert ei.value.stage == 'config'


def test_config_validation_and_overrides(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig({'seeds': []})
    with pytest.raises(ConfigurationError):
        ExperimentConfig({'modes': ['sch9']})
    path = tmp_path / 'c.json'
    path.write_text(json.dumps({'capacity': {'Q': [5]}}))
    cfg = load_config(path, {'capacity.Q': '[5, 50]', 'graph.c': '0.25'})
    assert cfg.data['capacity']['Q'] == [5, 50]
    assert cfg.data['graph']['c'] == 0.25
    preset = ExperimentConfig(default_preset())
    assert preset.data['capacity']['Q'] == [5, 20]
    assert preset.data['model']['ttl'] == [60, 300, 1200]


# -- gain report ---------------------------------------------------------------

def _pair(h0, h1, n=1000, **point):
    base = dict(point, seed=0, requests=n, soft_hits=0, misses=0)
    return [dict(base, mode='none', full_hits=round(h0 * n)),
            dict(base, mode='sch1', full_hits=round(h1 * n))]


def test_identical_hit_ratios_give_zero_gain():
    g = report_gains(_pair(0.5, 0.5, Q=5, ttl=60))
    assert g[0]['gain'] == 0.0


def test_gain_arithmetic():
    g = report_gains(_pair(0.5, 0.6, Q=5, ttl=60))
    assert g[0]['gain'] == pytest.approx(0.2, abs=1e-12)
    assert g[0]['gain_se'] > 0
    assert '20.0%' in format_gain_table(g)


def test_unmatched_runs_are_rejected():
    rows = _pair(0.5, 0.6, Q=5, ttl=60)[:1]
    with pytest.raises(ReportError):
        report_gains(rows)


def test_gains_across_seeds_use_seed_spread():
    rows = []
    for seed, (h0, h1) in enumerate([(0.5, 0.6), (0.5, 0.55)]):
        for r in _pair(h0, h1, Q=5, ttl=60):
            r['seed'] = seed
            rows.append(r)
    g = report_gains(rows)[0]
    assert g['seeds'] == 2
    assert g['gain'] == pytest.approx(0.15, abs=1e-12)
    assert g['gain_se'] == pytest.approx(np.std([0.2, 0.1], ddof=1) / np.sqrt(2), rel=1e-9)


# -- command line --------------------------------------------------------------

def test_cli_pipeline(tmp_path, capsys):
    d = tmp_path
    assert main(['gen-catalog', '--K', '50', '--alpha', '1', '--seed', '1',
                 '--out', str(d / 'cat.csv')]) == 0
    assert main(['gen-graph', '--catalog', str(d / 'cat.csv'), '--L', '2', '--seed', '2',
                 '--out', str(d / 'g.txt')]) == 0
    assert main(['gen-trace', '--model', 'exponential', '--users', '10', '--cells', '5',
                 '--lam', '0.002', '--horizon', '20000', '--seed', '3',
                 '--out', str(d / 'tr.csv')]) == 0
    assert main(['solve', '--catalog', str(d / 'cat.csv'), '--graph', str(d / 'g.txt'),
                 '--policy', 'sch1', '--lam', '0.002', '--ttl', '300', '--M', '5', '--Q', '3',
                 '--out', str(d / 'pl.csv')]) == 0
    assert main(['simulate', '--trace', str(d / 'tr.csv'), '--catalog', str(d / 'cat.csv'),
                 '--graph', str(d / 'g.txt'), '--placement', str(d / 'pl.csv'), '--Q', '3',
                 '--mode', 'sch1', '--requests', '2000', '--seed', '4',
                 '--out', str(d / 'hs.csv')]) == 0
    assert _rows(d / 'hs.csv')[0]['mode'] == 'sch1'
    cfg = d / 'exp.json'
    data = _single_point(d / 'sweep', **{'graph.classes': ['random'], 'graph.L': [2],
                                         'modes': ['none', 'sch1'], 'requests': 3000})
    cfg.write_text(json.dumps(data))
    assert main(['sweep', '--config', str(cfg), '--set', 'seeds=[0, 1]']) == 0
    assert main(['report', str(d / 'sweep' / 'ttl_q_grid.csv'), '--out',
                 str(d / 'gains.csv')]) == 0
    assert float(_rows(d / 'gains.csv')[0]['gain']) >= 0
    capsys.readouterr()


def test_cli_reports_stage_on_failure(tmp_path, capsys):
    assert main(['simulate', '--trace', str(tmp_path / 'missing.csv')]) != 0
    assert 'softcache simulate:' in capsys.readouterr().err
    cfg = tmp_path / 'bad.json'
    cfg.write_text('{"graph": {"classes": ["bogus"]}}')
    assert main(['sweep', '--config', str(cfg)]) != 0
    assert '[config]' in capsys.readouterr().err
