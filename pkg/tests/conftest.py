"""Suite-wide pytest hooks.

test_acceptance appends its per-criterion result lines to SCOREBOARD;
printing them from the terminal-summary hook keeps them visible under
pytest's fd-level capture.
"""

SCOREBOARD = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if SCOREBOARD:
        terminalreporter.section("acceptance scoreboard")
        for line in SCOREBOARD:
            terminalreporter.line(line)
