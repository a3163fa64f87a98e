import pytest

from fluidcc import LossModel, ModelParams, integrate

TABLE_ROWS = [(10.0, 10), (10.0, 5), (5.0, 10)]


@pytest.fixture(params=TABLE_ROWS, ids=lambda r: f"C{r[0]:g}-B{r[1]}")
def table_row(request):
    return request.param


@pytest.fixture(scope="session")
def row1_trajectory():
    return integrate(ModelParams(LossModel("finite", 10.0, 10), 0.5))


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[number] = (passed, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
