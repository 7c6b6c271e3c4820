"""Experiment configuration: a JSON document plus field overrides.

Schema (every section optional except where noted; defaults shown)::

    {
      "name": "experiment",
      "catalog": {"K": 1000, "alpha": 2.0, "seed": 1},
          # or {"edges": "edges.txt", "popularity": "popularity.txt"}
          # or {"crawl": {"K": 1500, "related_per_video": 3, "seed": 7}}
      "graph": {"classes": ["random"], "L": [5], "case": 1, "c": 0.5, "seed": 2},
          # classes: random | proportional | empty | dataset
      "model": {"trace": "tvcm", "mobility": {...}, "lambda": null,
                "ttl": [300]},
          # trace: tvcm | exponential | path to a saved trace CSV;
          # exponential needs "lambda", "users", "horizon", "trace_seed"
      "capacity": {"M": null, "Q": [20]},       # M defaults to the cell count
      "policies": ["base", "sch1", "sch2"],
      "modes": ["none", "sch1", "sch2"],
      "seeds": [0],
      "requests": 20000,
      "integer_mode": "round",
      "sweeps": {"l_sweep": {}, "policy_bars": {}, "grid": {}},
      "output": "results"
    }

Sweep sections accept ``classes``, ``L``, ``Q``, ``ttl``, ``policies`` and
``modes`` to override the top-level values for that sweep. ``L`` is the
expected number of related contents per content for both synthetic
graph classes.
"""

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..contact.mobility import MobilityConfig
from ..errors import ConfigurationError
from ..protocol import MODES, POLICIES

__all__ = [
    'ExperimentConfig',
    'GRAPH_CLASSES',
    'SWEEPS',
    'load_config',
    'default_preset',
    'apply_overrides',
]

GRAPH_CLASSES = ('random', 'proportional', 'empty', 'dataset')
SWEEPS = ('l_sweep', 'policy_bars', 'grid')

_DEFAULTS = {
    'name': 'experiment',
    'catalog': {'K': 1000, 'alpha': 2.0, 'seed': 1},
    'graph': {'classes': ['random'], 'L': [5], 'case': 1, 'c': 0.5, 'seed': 2},
    'model': {'trace': 'tvcm', 'mobility': {}, 'lambda': None, 'ttl': [300]},
    'capacity': {'M': None, 'Q': [20]},
    'policies': list(POLICIES),
    'modes': list(MODES),
    'seeds': [0],
    'requests': 20000,
    'integer_mode': 'round',
    'sweeps': {'grid': {}},
    'output': 'results',
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``data`` is the fully resolved JSON-compatible dictionary; ``path`` the
    file it was read from (used in error messages only).
    """

    data: dict
    path: str = None

    def __post_init__(self):
        d = _merge(_DEFAULTS, self.data)
        if 'sweeps' in self.data:
            d['sweeps'] = copy.deepcopy(self.data['sweeps'])
        for key in ('L', 'classes'):
            d['graph'][key] = _as_list(d['graph'][key])
        d['model']['ttl'] = _as_list(d['model']['ttl'])
        d['capacity']['Q'] = _as_list(d['capacity']['Q'])
        for key in ('policies', 'modes', 'seeds'):
            d[key] = _as_list(d[key])
        object.__setattr__(self, 'data', d)
        self._validate()

    def _fail(self, msg):
        where = f"{self.path}: " if self.path else ""
        raise ConfigurationError(where + msg)

    def _validate(self):
        d = self.data
        lists = {'graph.L': d['graph']['L'], 'graph.classes': d['graph']['classes'],
                 'model.ttl': d['model']['ttl'], 'capacity.Q': d['capacity']['Q'],
                 'policies': d['policies'], 'modes': d['modes'], 'seeds': d['seeds'],
                 'sweeps': list(d['sweeps'])}
        for name, val in lists.items():
            if not val:
                self._fail(f"{name} must be a nonempty list")
        bad = set(d['graph']['classes']) - set(GRAPH_CLASSES)
        if bad:
            self._fail(f"unknown graph classes {sorted(bad)}")
        if 'dataset' in d['graph']['classes'] and not self.uses_dataset:
            self._fail("graph class 'dataset' needs catalog edges/popularity or crawl")
        if set(d['policies']) - set(POLICIES) or set(d['modes']) - set(MODES):
            self._fail(f"policies must be drawn from {POLICIES} and modes from {MODES}")
        if set(d['sweeps']) - set(SWEEPS):
            self._fail(f"unknown sweeps {sorted(set(d['sweeps']) - set(SWEEPS))}")
        for sweep in d['sweeps']:
            s = self.sweep(sweep)
            if not s['policies'] or not s['modes'] or not s['classes']:
                self._fail(f"sweep {sweep} has an empty policy, mode or class list")
            if set(s['policies']) - set(POLICIES) or set(s['modes']) - set(MODES):
                self._fail(f"sweep {sweep} has an invalid policy or mode")
        if d['graph']['case'] == 2 and not 0 < d['graph']['c'] < 1:
            self._fail("graph.c must lie in (0, 1)")
        if not 0 < d['graph']['c'] <= 1:
            self._fail("graph.c must lie in (0, 1]")
        if any(t <= 0 for t in d['model']['ttl']) or any(q < 1 for q in d['capacity']['Q']):
            self._fail("ttl values must be > 0 and Q values >= 1")
        if int(d['requests']) < 1:
            self._fail("requests must be >= 1")
        if d['integer_mode'] not in ('round', 'fractional'):
            self._fail("integer_mode must be 'round' or 'fractional'")
        trace = d['model']['trace']
        if trace == 'exponential':
            for key in ('lambda', 'users', 'horizon'):
                if d['model'].get(key) is None:
                    self._fail(f"exponential traces need model.{key}")
        elif trace == 'tvcm':
            try:
                self.mobility()
            except TypeError as exc:
                self._fail(f"bad mobility settings: {exc}")

    @property
    def uses_dataset(self):
        cat = self.data['catalog']
        return 'crawl' in cat or ('edges' in cat and 'popularity' in cat)

    @property
    def output(self):
        return Path(self.data['output'])

    @property
    def seeds(self):
        return self.data['seeds']

    def mobility(self):
        m = dict(self.data['model'].get('mobility') or {})
        for key in ('speed', 'pause', 'communities', 'cell_centers', 'start_positions'):
            if m.get(key) is not None:
                m[key] = tuple(tuple(v) if isinstance(v, list) else v for v in m[key])
        return MobilityConfig(**m)

    def sweep(self, name):
        """Resolved dimensions of one sweep."""
        d = self.data
        s = d['sweeps'].get(name) or {}
        ttl, Q, L = d['model']['ttl'], d['capacity']['Q'], d['graph']['L']

        def pick(values, preferred):
            return preferred if preferred in values else values[0]

        if name == 'l_sweep':
            classes = [c for c in d['graph']['classes'] if c in ('random', 'proportional')]
            out = dict(classes=classes or ['random'], L=L, Q=[pick(Q, 20)], ttl=[pick(ttl, 300)],
                       policies=['base'], modes=[m for m in d['modes'] if m != 'none'] or ['sch1'])
        elif name == 'policy_bars':
            out = dict(classes=d['graph']['classes'], L=[pick(L, 5)], Q=[pick(Q, 5)],
                       ttl=[pick(ttl, 300)], policies=d['policies'], modes=d['modes'])
        else:
            out = dict(classes=d['graph']['classes'], L=[pick(L, 5)], Q=Q, ttl=ttl,
                       policies=['base'], modes=[m for m in d['modes'] if m in ('none', 'sch1')]
                       or ['none'])
        for key in out:
            if key in s:
                out[key] = _as_list(s[key])
        return out

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=2)

    def config_hash(self):
        """SHA-256 prefix of the resolved configuration without the output path."""
        d = dict(self.data)
        d.pop('output', None)
        blob = json.dumps(d, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]


def load_config(path, overrides=None):
    """Read a JSON config file and apply dotted-key overrides."""
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return ExperimentConfig(apply_overrides(data, overrides or {}), str(path))


def apply_overrides(data, overrides):
    """Return a copy of ``data`` with ``{"a.b": value}`` entries set.

    String values are parsed as JSON when possible, so ``"[5, 20]"``
    becomes a list and ``"0.5"`` a number.
    """
    out = copy.deepcopy(data)
    for key, value in overrides.items():
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                pass
        node = out
        parts = key.split('.')
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override {key!r}: {p!r} is not a section")
        node[parts[-1]] = value
    return out


def default_preset(output='results', seeds=range(10)):
    """Paper-like setting: K=1000, Zipf 2, 25 cells of 100 m, Q in {5, 20}.

    Access deadlines are 1, 5 and 20 minutes and the soft-hit utility is
    0.5. The meeting rate is estimated from the generated trace.
    """
    return {
        'name': 'default',
        'catalog': {'K': 1000, 'alpha': 2.0, 'seed': 1},
        'graph': {'classes': ['random', 'proportional'], 'L': [0, 1, 2, 5, 10],
                  'case': 1, 'c': 0.5, 'seed': 2},
        'model': {'trace': 'tvcm', 'mobility': {'n_communities': 3, 'cells': 25,
                                                'cell_range': 100.0, 'seed': 0},
                  'lambda': None, 'ttl': [60, 300, 1200]},
        'capacity': {'M': 25, 'Q': [5, 20]},
        'policies': list(POLICIES),
        'modes': list(MODES),
        'seeds': list(seeds),
        'requests': 20000,
        'integer_mode': 'round',
        'sweeps': {'l_sweep': {}, 'policy_bars': {}, 'grid': {}},
        'output': str(output),
    }
