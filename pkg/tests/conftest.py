import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance suite's criterion lines, whatever the capture mode."""
    reports = [
        rep
        for outcome in ("passed", "failed")
        for rep in terminalreporter.stats.get(outcome, [])
        if rep.when == "call" and "test_acceptance.py::test_" in rep.nodeid
    ]
    if not reports:
        return
    reports.sort(key=lambda rep: int(rep.nodeid.split("::test_")[1].split("_")[0]))
    terminalreporter.section("acceptance criteria")
    for rep in reports:
        for line in rep.capstdout.splitlines():
            if line.strip():
                terminalreporter.line(line)
