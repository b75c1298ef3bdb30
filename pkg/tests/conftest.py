import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Record one 'PASS/FAIL criterion ...' line; all lines print in the terminal summary."""
    lines = request.config.stash[_LINES]

    def report(number: int, ok: bool, text: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {text}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
