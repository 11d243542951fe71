import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, name, ok, detail in sorted(mod.VERDICTS, key=lambda v: v[0]):
        line = f"{'PASS' if ok else 'FAIL'}  [{crit}] {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
