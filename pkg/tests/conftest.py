"""Prints the per-criterion pass/fail summary after the run."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERIA_RESULTS
    except ImportError:
        return
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA_RESULTS):
        status, detail = CRITERIA_RESULTS[num]
        line = f"CRITERION {num:2d}: {status}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
