import pytest

# criterion number -> (name, passed, detail), filled in by test_acceptance
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num} {'PASS' if ok else 'FAIL'}: {name} ({detail})")


@pytest.fixture
def record_criterion():
    def record(num, name, ok, detail):
        ACCEPTANCE_RESULTS[num] = (name, bool(ok), detail)
        print(f"criterion {num} {'PASS' if ok else 'FAIL'}: {name} ({detail})")
        return ok
    return record
