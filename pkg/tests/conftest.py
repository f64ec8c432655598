"""Shared pytest wiring for the suite.

The acceptance module records one status line per criterion as it runs;
this hook replays those lines at the end of the session so the verdicts
are visible in one block regardless of verbosity settings.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name, module in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines = getattr(module, "RESULTS", None)
            if lines:
                terminalreporter.section("acceptance criteria")
                for line in lines:
                    terminalreporter.write_line(line)
            return
