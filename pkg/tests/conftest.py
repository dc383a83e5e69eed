import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    import scenarios

    if scenarios.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(scenarios.ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][3:])):
            terminalreporter.write_line(line)
