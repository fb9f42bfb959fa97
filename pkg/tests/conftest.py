import os
from pathlib import Path

import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one status line per acceptance criterion for the terminal summary."""
    def record(criterion, status, detail=""):
        _ACCEPTANCE.append((criterion, status, detail))
    return record


@pytest.fixture(scope="session")
def data_dir():
    return Path(os.environ.get("TRACERNN_DATA_DIR", Path(__file__).parent.parent / "data"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{criterion:<4} {status:<10} {detail}")
