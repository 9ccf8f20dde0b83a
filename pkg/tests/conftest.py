"""Shared pytest wiring.

The acceptance tests register one verdict line per criterion; echoing them
in the terminal summary keeps the lines visible under output capture.
"""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
