import pytest

# (criterion, passed, detail) lines collected by the acceptance suite
_VERDICTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line, then fail the test if it did not pass."""

    def report(name: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _VERDICTS.append((name, passed, detail))
        with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
            print("\n" + line, flush=True)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _VERDICTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
