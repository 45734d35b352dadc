import pytest

from aoii.applications import Weibull, error_f, linear_f, video_f, weibull_f
from aoii.model import validate

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str) -> None:
    """Log one acceptance line; shown in the terminal summary and on stdout."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def ref_params():
    return validate(0.2, 0.9, 0.8)


@pytest.fixture
def penalties():
    return {"linear": linear_f(), "weibull": weibull_f(Weibull(1.0, 1.0), 1e-3),
            "error": error_f(), "video": video_f()}
