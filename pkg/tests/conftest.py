import pytest

ACCEPTANCE_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
