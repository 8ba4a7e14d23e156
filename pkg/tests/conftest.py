import os
import sys
from functools import lru_cache

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from miwf.geometry import geometry_of  # noqa: E402
from miwf.surfaces import build_clifford_stereo, build_clifford_torus, build_torus_of_revolution  # noqa: E402


@lru_cache(maxsize=None)
def torus(R, r, n):
    return build_torus_of_revolution(R, r, n, n)


@lru_cache(maxsize=None)
def torus_geometry(R, r, n):
    return geometry_of(torus(R, r, n))


@lru_cache(maxsize=None)
def clifford(n):
    return build_clifford_torus(n, n)


@lru_cache(maxsize=None)
def clifford_stereo(n):
    return build_clifford_stereo(n, n)


def row_of(n, u):
    """Grid index of the parameter value ``u`` (must lie on the grid)."""
    i = u * n / (2 * np.pi)
    assert abs(i - round(i)) < 1e-9
    return int(round(i)) % n


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
