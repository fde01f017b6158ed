"""Shared pytest hooks.

The acceptance module records one pass/fail line per criterion in its
``CRITERION_LINES`` list; echoing them here in a terminal-summary
section keeps them visible even though pytest captures test stdout.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name, module in list(sys.modules.items()):
        if name.rpartition(".")[2] != "test_acceptance":
            continue
        lines = getattr(module, "CRITERION_LINES", None)
        if lines:
            terminalreporter.section("acceptance criteria")
            for line in lines:
                terminalreporter.write_line(line)
