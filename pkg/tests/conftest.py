import json
from pathlib import Path

import pytest

from forkjoin.model import reference_config

DATA = Path(__file__).parent / "data"

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def figure_series():
    return json.loads((DATA / "figure_series.json").read_text())["series"]


def find_series(all_series, x, metric, kind, **fixed):
    for s in all_series:
        if (s["x"], s["metric"], s["kind"]) == (x, metric, kind) and all(
            abs(s["fixed"].get(key, -1) - v) < 1e-12 for key, v in fixed.items()
        ):
            return s["points"]
    raise KeyError((x, metric, kind, fixed))


def point_at(points, x):
    for px, py in points:
        if abs(px - x) < 1e-9:
            return py
    raise KeyError(x)


@pytest.fixture
def eval_config():
    return reference_config()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
