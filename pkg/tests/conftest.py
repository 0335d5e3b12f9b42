import pytest

CRITERIA = {}


@pytest.fixture
def record():
    def _record(num: int, passed: bool, detail: str):
        CRITERIA[num] = (bool(passed), detail)
        print(f"criterion {num}: {'PASS' if passed else 'FAIL'} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        passed, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if passed else 'FAIL'} {detail}")
