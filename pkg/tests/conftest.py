import math

import numpy as np
import pytest

from haarthermo.groupoid import PointSpace, TransverseFunction, build_partition_groupoid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def g4():
    space = PointSpace(("p1", "p2", "p3", "p4"))
    return build_partition_groupoid(space, [["p1", "p2"], ["p3", "p4"]])


@pytest.fixture
def g4_nu(g4):
    return TransverseFunction.uniform(g4)


@pytest.fixture
def g4_u():
    return np.log([2.0, 4.0, 1.0, 1.0])


@pytest.fixture
def g4_v():
    return np.log([2 / 3, 4 / 3, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
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


G4_ENTROPY = -(1 / 3 * math.log(2 / 3) + 2 / 3 * math.log(4 / 3))
