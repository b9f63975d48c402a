import json
from pathlib import Path

import pytest

import arvmc
from arvmc.hamio import load_fcidump

DATA = Path(arvmc.__file__).parent / "data"


def data_path(name: str) -> Path:
    return DATA / f"{name}.fcidump"


def manifest() -> dict:
    with open(DATA / "manifest.json") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def h2():
    return load_fcidump(data_path("h2"))


@pytest.fixture(scope="session")
def lih():
    return load_fcidump(data_path("lih"))


@pytest.fixture(scope="session")
def h2o():
    return load_fcidump(data_path("h2o"))


# Acceptance criteria are tagged with ``@pytest.mark.criterion(n)``; their
# outcomes are collected here and printed as one line each after the run.
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        entry = _CRITERIA.setdefault(props["criterion"], [])
        entry.append((report.nodeid.split("::")[-1], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        runs = _CRITERIA[n]
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        details = "; ".join(f"{name}: {detail}" if detail else name for name, _, detail in runs)
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {details}")
