import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topoclass.datasets import locate_dataset  # noqa: E402

DATA_ENV = "TOPOCLASS_DATA"

_criteria: dict[int, dict] = {}


def data_dir():
    value = os.environ.get(DATA_ENV)
    return Path(value) if value else None


@pytest.fixture
def benchmark_data():
    """Return a loader for a benchmark dataset, skipping when its files are absent."""
    from topoclass.datasets import load_dataset

    def get(name):
        root = data_dir()
        if root is None or locate_dataset(name, root) is None:
            pytest.skip(f"{name} files not available; set {DATA_ENV} to a directory holding them")
        return load_dataset(name, root)

    return get


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = crit
        entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outs = entry["outcomes"]
        if "failed" in outs:
            verdict = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            verdict = "NOT RUN (skipped)"
        elif "skipped" in outs:
            verdict = "PASS (partial; some parts skipped)"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number}: {verdict:34} {entry['title']}")
