import numpy as np
import pytest

from jdvol.models import SamplePath


def random_path(rng, n, delta=0.01, scale=1.0):
    """Random-walk levels with a few jumps; a generic test input."""
    steps = scale * np.sqrt(delta) * rng.standard_normal(n)
    jumps = rng.random(n) < 0.02
    steps[jumps] += scale * 0.3 * rng.standard_normal(jumps.sum())
    return SamplePath(np.concatenate(([0.0], np.cumsum(steps))), delta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def direct_double_smoothed(values, delta, kernel, h, eps, x):
    """Plain double loop: outer i = 1..n, inner j = 1..n-1, m = 0 terms dropped."""
    n = len(values) - 1
    num2 = num4 = den = 0.0
    for i in range(1, n + 1):
        w = float(kernel(np.array((values[i] - x) / h)))
        if w == 0:
            continue
        m, s2, s4 = 0, 0.0, 0.0
        for j in range(1, n):
            if abs(values[j] - values[i]) <= eps:
                d = values[j + 1] - values[j]
                m += 1
                s2 += d * d
                s4 += d**4
        if m == 0:
            continue
        num2 += w * s2 / (m * delta)
        num4 += w * s4 / (m * delta)
        den += w
    return num2 / den, num4 / den


_OU_CACHE = {}


def ou_jump_paths(reps=100, horizon=500.0, delta=0.01, seed_base=500):
    """Default ou-jump replications shared by several tests."""
    from jdvol.models import SimConfig, make_model, simulate_paths

    key = (reps, horizon, delta, seed_base)
    if key not in _OU_CACHE:
        n = int(round(horizon / delta))
        _OU_CACHE[key] = simulate_paths(make_model("ou-jump"), SimConfig(0.0, n, delta), range(seed_base, seed_base + reps))
    return _OU_CACHE[key]


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    """Print and keep one PASS/FAIL line; the terminal summary repeats them."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append((number, line))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
