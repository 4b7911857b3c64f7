import functools

import pytest

from bccpolar.codec import ChainConfig
from bccpolar.sets import EXACT, build_sets, estimate_profiles
from bccpolar.source import PRESETS


@functools.lru_cache(maxsize=None)
def exact_sets(preset, N, beta=0.25):
    src = PRESETS[preset]()
    return src, build_sets(estimate_profiles(src, N, method=EXACT), beta)


def exact_config(preset, N, k):
    src, sets = exact_sets(preset, N)
    return ChainConfig(src, sets, k)


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(20261016)


ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the lines are repeated at the end of the run."""

    def record(number, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed <= budget
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {budget:.0f}s]"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
