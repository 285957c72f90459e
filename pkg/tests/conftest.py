import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance-criterion verdict and fail the test if it failed."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" -- {detail}"
        CRITERIA[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
