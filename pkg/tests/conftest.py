"""Shared pytest wiring.

Echoes the acceptance gate's one-line verdicts into the terminal summary,
since default output capture would otherwise hide them on passing runs.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICT_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
