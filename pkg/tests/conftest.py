import math

import numpy as np
import pytest

TWO_PI = 2.0 * math.pi

# reference parameter set (rad/s)
OMEGA_C = TWO_PI * 2.691e9
KAPPA = TWO_PI * 440e3
GAMMA = TWO_PI * 5.9e3
INH_FWHM = TWO_PI * 9.4e6
COUPLING = TWO_PI * 10.65e6
Q = 2.2

_ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    _ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_packets(rng, n, spread=TWO_PI * 20e6, g_scale=TWO_PI * 1e6,
                   gamma=TWO_PI * 50e3, center=OMEGA_C):
    from darkstates.spectral import SpinPacketSet

    w = np.sort(center + rng.uniform(-spread, spread, n))
    while n > 1 and np.any(np.diff(w) <= 0):
        w = np.sort(center + rng.uniform(-spread, spread, n))
    g = g_scale * rng.uniform(0.2, 1.0, n)
    return SpinPacketSet(w, g, gamma)
