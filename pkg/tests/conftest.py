import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict; an unrecorded criterion counts as failed."""
    recorded = []

    def record(ok: bool, detail: str = "") -> bool:
        recorded.append(True)
        _CRITERIA.append((request.node.name, bool(ok), detail))
        return ok

    yield record
    if not recorded:
        _CRITERIA.append((request.node.name, False, "did not complete"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
