"""Collects acceptance-check verdicts and prints them after the test run."""

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
