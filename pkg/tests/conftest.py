import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from selbias import fixtures  # noqa: E402

GRAPH_DIR = Path(__file__).resolve().parents[1] / "graphs"


@pytest.fixture
def case1():
    return fixtures.case1()


@pytest.fixture
def case2():
    return fixtures.case2()


@pytest.fixture
def graph_dir():
    return GRAPH_DIR


_ACCEPTANCE = {}


@pytest.fixture
def record(request):
    """Record one acceptance criterion's outcome; failures are recorded before raising."""
    def _record(number, title, ok, detail=""):
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        mark = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{mark}] criterion {number}: {title}  {detail}".rstrip())
