"""Prints one pass/fail line per acceptance criterion in the terminal summary
(outside pytest's capture, so the lines always reach the console)."""

import pytest

_acceptance_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call" or "test_acceptance" not in item.nodeid:
        return
    try:
        idx = int(item.name.split("_")[1])
    except (IndexError, ValueError):
        idx = -1
    detail = getattr(item.module, "ACCEPTANCE_DETAILS", {}).get(idx, "")
    status = "PASS" if rep.passed else "FAIL"
    line = f"[acceptance {idx:>2d}] {detail or item.name}: {status}"
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
