import numpy as np
import pytest

from rps_kinetic.core import DensityField, Grid1D, ModelParams


@pytest.fixture
def line_grid():
    # dx = 0.25/8, wide enough that the t <= 5 runs never reach the ends
    return Grid1D(-10.0, 11.0, 672)


@pytest.fixture
def half_grid():
    return Grid1D(0.0, 20.0, 640)


@pytest.fixture
def box(line_grid):
    return DensityField.indicator(line_grid, 0.0, 1.0)


@pytest.fixture
def params():
    return ModelParams(eta=3.0, h=0.25, rho=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        for key, value in report.user_properties:
            if key == "criterion":
                _VERDICTS.append(value)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(_VERDICTS, key=lambda s: (int(s.split()[1].rstrip("abcdef:")), s)):
        terminalreporter.write_line(line)
