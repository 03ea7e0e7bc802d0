import sys
from pathlib import Path

# Allow the oracle helpers to be imported as a plain module from any test.
sys.path.insert(0, str(Path(__file__).parent))

_acceptance_results: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    """Collect acceptance-criterion outcomes for the end-of-run summary."""
    _acceptance_results.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _acceptance_results:
        verdict = "PASS" if passed else "FAIL"
        line = f"[{verdict}] {name}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
