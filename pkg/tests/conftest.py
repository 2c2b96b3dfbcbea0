import pytest

from shorsim import experiments as ex


@pytest.fixture(scope="session")
def expectations():
    return ex.load_expectations()


def pytest_terminal_summary(terminalreporter):
    from scenarios import CRITERIA

    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        checks = CRITERIA[n]
        bad = [c for c in checks if not c[1]]
        status = "PASS" if not bad else "FAIL"
        terminalreporter.write_line(f"CRITERION {n}: {status} ({len(checks) - len(bad)}/{len(checks)} checks)")
        for name, ok, detail in checks:
            if not ok or detail:
                mark = "ok  " if ok else "FAIL"
                terminalreporter.write_line(f"    {mark} {name}" + (f": {detail}" if detail else ""))
