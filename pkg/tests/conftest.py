import numpy as np
import pytest

from tetherguide.params import SystemParams
from tetherguide.path import ParametricPath


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def detour_path():
    return ParametricPath([[-2.0, -0.5, 0.0], [0.0, 0.5, 0.0], [2.0, 0.0, 0.0]])


@pytest.fixture
def straight_x():
    return ParametricPath([[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]])


def taut_state(refs, dp_H=(0.0, 0.0, 0.0), v_H=(0.0, 0.0, 0.0), dp_R=(0.0, 0.0, 0.0), v_R=(0.0, 0.0, 0.0)):
    return np.concatenate([refs.p_H_ref + dp_H, v_H, refs.p_R_ref + dp_R, v_R]).astype(float)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for r in RESULTS:
            terminalreporter.write_line(r.line())
