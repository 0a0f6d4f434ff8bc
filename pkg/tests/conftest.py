import os

# keep kernel threads and test workers within the box
os.environ.setdefault("MODECHAR_THREADS", str(os.cpu_count() or 2))

_CRITERION_LINES = []


def record_criterion(num, description, passed, detail=""):
    """Collect one acceptance-criterion verdict for the terminal summary."""
    verdict = "PASS" if passed else "FAIL"
    suffix = f" [{detail}]" if detail else ""
    line = f"criterion {num}: {verdict} - {description}{suffix}"
    _CRITERION_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)
