import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# derandomized so a red run is reproducible
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")

SEED = 20240917

_acceptance_lines: list[str] = []


@pytest.fixture
def record():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def _record(criterion: str, ok: bool, detail: str = "") -> bool:
        line = f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(line)
        _acceptance_lines.append(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
