import pytest

_RESULTS = []


@pytest.fixture
def report(request):
    """Record one acceptance verdict and echo it to the terminal."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(criterion, passed, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
        _RESULTS.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
