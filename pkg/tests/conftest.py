import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


class AcceptanceRecorder:
    def __init__(self, lines):
        self._lines = lines

    def __call__(self, number, passed, detail):
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        self._lines[number] = line
        print(line)
        return passed


@pytest.fixture(scope="session")
def record(request):
    return AcceptanceRecorder(request.config.stash[_LINES])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
