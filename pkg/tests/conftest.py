import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def smooth_curve(rng, m=101, p=3, modes=4):
    """Random smooth curve: sum of a few sine/cosine modes plus a drift."""
    x = np.linspace(0.0, 1.0, m)
    f = np.outer(x, rng.normal(size=p))
    for k in range(1, modes + 1):
        f += np.outer(np.sin(np.pi * k * x), rng.normal(size=p) / k)
        f += np.outer(np.cos(np.pi * k * x), rng.normal(size=p) / (2 * k))
    return f


def exp_warp(a, m=101):
    """gamma(x) = (e^{a x} - 1) / (e^a - 1), identity at a = 0."""
    x = np.linspace(0.0, 1.0, m)
    if abs(a) < 1e-12:
        return x
    g = np.expm1(a * x) / np.expm1(a)
    g[0], g[-1] = 0.0, 1.0
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_TOTAL = 12


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the terminal summary prints them all."""
    results = request.config.__dict__.setdefault("_acceptance", {})

    def record(number, ok, detail):
        results[number] = (bool(ok), detail)
        print(f"acceptance {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"acceptance {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_TOTAL + 1):
        ok, detail = results.get(n, (False, "no verdict recorded (test errored or was deselected)"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
