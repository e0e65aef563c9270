from pathlib import Path

import numpy as np
import pytest

from patientstab import schema

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_fixture(name: str):
    return schema.parse_system(schema.load(FIXTURES / f"{name}.json"))


@pytest.fixture
def fixture_system():
    return load_fixture


# exact Lipschitz blocks of H under the constant delays D
DH_A0 = np.array([[0.75, 0, 0], [1, 1.25, 0], [1, 0, 0.75]])
DH_A1 = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=float)
D_EQ = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]])
H_PAPER_POINT = np.array([-1.05, 0.62, 0.14])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
