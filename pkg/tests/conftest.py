import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if helpers.CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in helpers.CRITERIA_LINES:
            terminalreporter.write_line(line)
