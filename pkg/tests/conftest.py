import numpy as np
import pytest

from hkdyn import OpinionState


def random_state(seed: int, n: int | None = None, lo: float = 0.0, hi: float = 1.0) -> OpinionState:
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(1, 201))
    return OpinionState(0, rng.uniform(lo, hi, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
