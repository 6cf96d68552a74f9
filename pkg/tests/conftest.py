import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tlconvnet import ingest  # noqa: E402

FIXTURES = resources.files("tlconvnet.resources.fixtures")
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def fixture_path(name):
    return str(FIXTURES.joinpath(name))


@pytest.fixture(scope="session")
def nsl_train():
    return ingest.load_nslkdd(fixture_path("KDDTrain+_fixture.txt"), "TrainPlus")


@pytest.fixture(scope="session")
def nsl_test_plus():
    return ingest.load_nslkdd(fixture_path("KDDTest+_fixture.txt"), "TestPlus")


@pytest.fixture(scope="session")
def nsl_test_21():
    return ingest.load_nslkdd(fixture_path("KDDTest-21_fixture.txt"), "Test21")


@pytest.fixture(scope="session")
def unsw():
    return ingest.load_unswnb15([fixture_path("UNSW_NB15_fixture.csv")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_config(directory, **overrides):
    """A desk-profile run config over the bundled fixtures, written to ``directory/config.json``."""
    cfg = json.loads((CONFIGS / "desk.json").read_text())
    cfg["out"] = str(Path(directory) / "out")
    cfg.update(overrides)
    path = Path(directory) / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# one PASS/FAIL/SKIP line per acceptance criterion in the terminal summary

_criteria = {}  # number -> [title, outcomes]
_node_criterion = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            number, title = m.args
            _criteria.setdefault(number, [title, []])
            _node_criterion[item.nodeid] = number


def pytest_runtest_logreport(report):
    number = _node_criterion.get(report.nodeid)
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria[number][1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        skipped = outcomes.count("skipped")
        note = f" [{skipped} of {len(outcomes)} checks skipped]" if skipped and status == "PASS" else ""
        terminalreporter.write_line(f"criterion {number}: {status:<7} {title}{note}")
