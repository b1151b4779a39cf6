from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rpoly.complex import build_complex
from rpoly.harness import load_polyhedron
from rpoly.metric import PiecewiseMetric

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("rpoly", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("rpoly")

SQUARE = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (1.0, 1.0), 3: (0.0, 1.0)}
STRIP = {**SQUARE, 4: (2.0, 0.0), 5: (2.0, 1.0)}
STRIP_TOP = [(0, 1, 2), (0, 2, 3), (1, 2, 5), (1, 4, 5)]


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def unit_square():
    return build_complex(2, [(0, 1, 2), (0, 2, 3)], SQUARE)


def strip(right=np.diag([1.0, 4.0])):
    """[0,2]x[0,1]; identity on the left unit square, ``right`` on the other."""
    c = build_complex(2, STRIP_TOP, STRIP)
    mats = [np.eye(2), np.eye(2), right, right]
    return PiecewiseMetric.constant(c, mats)


@pytest.fixture(scope="session")
def square_metric():
    return PiecewiseMetric.euclidean(unit_square())


@pytest.fixture(scope="session")
def strip_metric():
    return strip()


@pytest.fixture(scope="session")
def flat_strip_metric():
    return strip(np.eye(2))


@pytest.fixture(scope="session")
def poly():
    return lambda name: load_polyhedron(fixture_path(name))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
