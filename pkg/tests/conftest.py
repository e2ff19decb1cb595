"""Prints one verdict line per acceptance criterion after the run."""

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                             ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            match = _CRITERION.search(rep.nodeid)
            if match is None:
                continue
            num = int(match.group(1))
            label = match.group(2).replace("_", " ")
            lines[num] = f"criterion {num:02d} {label}: {verdict}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
