import numpy as np
import pytest

_CRITERIA: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class _Criterion:
    def __init__(self):
        self.number = None

    def __call__(self, number: int, title: str, ok: bool, detail: str) -> bool:
        self.number = number
        _CRITERIA[number] = f"criterion {number:>2}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        return ok


@pytest.fixture
def criterion(request):
    """Records one pass/fail line per acceptance criterion for the run summary."""
    rec = _Criterion()
    yield rec
    number = getattr(request.function, "criterion_number", None)
    if rec.number is None and number is not None:
        _CRITERIA[number] = f"criterion {number:>2}  FAIL  {request.node.name}: raised before reporting"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
