import numpy as np
import pytest
from hypothesis import settings

from sdid.core import CovariateKind, PanelDataset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def make_panel(x, y_pre, y_post, kind=CovariateKind.CATEGORICAL):
    ids = tuple(f"u{i}" for i in range(len(x)))
    return PanelDataset(ids, list(x), y_pre, y_post, kind)


@pytest.fixture
def hand_panel():
    """Level A deltas {2, 2}, level B deltas {1, 1}."""
    return make_panel(["A", "A", "B", "B"], [0.0, 1.0, 0.0, 2.0], [2.0, 3.0, 1.0, 3.0])


@pytest.fixture
def random_panel():
    g = np.random.default_rng(12345)
    n = 400
    x = g.choice(["A", "B", "C"], size=n, p=[0.3, 0.3, 0.4])
    y0 = g.normal(size=n) * 3 + 10
    y1 = y0 + g.normal(size=n) + (x == "A") * 1.5
    return make_panel(x, y0, y1)


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, printed at the end of the run."""

    def record(label: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
