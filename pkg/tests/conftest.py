import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile('default', max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile('default')

RUNTIME_LIMIT = 15 * 60.0


def pytest_configure(config):
    config._criteria = {}
    config._t0 = time.perf_counter()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record ``(number, ok, detail)`` parts for the acceptance summary."""
    def record(number, ok, detail):
        request.config._criteria.setdefault(number, []).append((bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config._criteria:
        return
    crit = {n: (all(ok for ok, _ in parts), "; ".join(d for _, d in parts))
            for n, parts in config._criteria.items()}
    elapsed = time.perf_counter() - config._t0
    if 8 in crit:
        ok, detail = crit[8]
        ok = ok and elapsed < RUNTIME_LIMIT
        crit[8] = (ok, f"{detail}; session runtime {elapsed:.0f} s (limit {RUNTIME_LIMIT:.0f} s)")
    terminalreporter.section('acceptance criteria')
    for n in sorted(crit):
        ok, detail = crit[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
