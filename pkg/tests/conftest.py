import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines.values():
            terminalreporter.write_line(line)
