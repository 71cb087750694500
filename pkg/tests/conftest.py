import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slicewave.radio import CapacityTable  # noqa: E402
from slicewave.scenario import build_overlap_index, load_scenario  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool | None, detail: str) -> None:
    """Log one criterion; ``ok=None`` marks a criterion that was not run."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {criterion}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def allow_large() -> bool:
    return os.environ.get("SLICEWAVE_ALLOW_LARGE", "") not in ("", "0")


class Loaded:
    def __init__(self, name):
        self.sc = load_scenario(name)
        self.ov = build_overlap_index(self.sc)
        self.cap = CapacityTable.for_scenario(self.sc, self.ov)


@pytest.fixture(scope="session")
def single():
    return Loaded("single_mvno")


@pytest.fixture(scope="session")
def multi():
    return Loaded("multi_mvno")


@pytest.fixture(scope="session")
def toy_pair():
    return Loaded("toy_pair")


@pytest.fixture(scope="session")
def toy_triple():
    return Loaded("toy_triple")
