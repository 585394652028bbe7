import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tabular_ail import Policy, TabularMdp

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def chain_mdp():
    """2 states, 1 action, H=2: start in 0, move to 1; reward only at (h=1, s=1)."""
    P = np.zeros((1, 2, 1, 2))
    P[0, 0, 0, 1] = 1.0
    P[0, 1, 0, 1] = 1.0
    r = np.zeros((2, 2, 1))
    r[1, 1, 0] = 1.0
    return TabularMdp(P, np.array([1.0, 0.0]), r)


@pytest.fixture
def single_action_policy():
    return Policy(np.ones((2, 2, 1)))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the session."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
