"""Collects acceptance summary lines and replays them after the run, so
they show up even though pytest captures stdout of passing tests."""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
