import numpy as np
import pytest

from adaptive_consensus import scenario as sc
from adaptive_consensus.graph import laplacian
from adaptive_consensus.simulation import simulate
from adaptive_consensus.synthesis import AgentDynamics

PAPER_P = np.array([[1.7559, -0.5853], [-0.5853, 0.5853]])
PAPER_Q = np.array([[0.2622, -0.3517], [-0.3517, 0.7395]])
PAPER_K_NOMINAL = np.array([[-0.8543, -2.5628]])
PAPER_GAMMA_NOMINAL = np.array([[0.7298, 2.1893], [2.1893, 6.5678]])
PAPER_K_ROBUST = np.array([[-5.0141, -3.7372]])
PAPER_GAMMA_ROBUST = np.array([[25.1412, 18.7386], [18.7386, 13.9665]])

_ACCEPTANCE_LINES = []


@pytest.fixture
def double_integrator():
    return AgentDynamics([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])


@pytest.fixture
def scalar_integrator():
    return AgentDynamics([[0.0]], [[1.0]])


class BuiltinRun:
    def __init__(self, name, horizon=None):
        self.doc = sc.builtin(name)
        self.scenario = sc.build_scenario(self.doc, horizon=horizon)
        self.part = laplacian(self.scenario.graph)
        self.traj = simulate(self.scenario)


@pytest.fixture(scope="session")
def nominal_run():
    return BuiltinRun("paper-nominal")


@pytest.fixture(scope="session")
def robust_run():
    return BuiltinRun("paper-robust")


@pytest.fixture(scope="session")
def drift_run():
    # twice the default horizon, so T and 2T come from the same run
    return BuiltinRun("paper-drift", horizon=40.0)


@pytest.fixture
def report_criterion():
    def record(label, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
