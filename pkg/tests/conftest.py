import json
from pathlib import Path

import pytest

from studyspec.validate import compile_study

STUDIES = Path(__file__).resolve().parent.parent / "studies"

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): one acceptance criterion")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and report.when == "call":
        verdict = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append(f"{verdict} {marker.args[0]}")
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_doc(sequence, components=None, **extra) -> str:
    if components is None:
        names = set()

        def collect(block):
            for c in block.get("components", []):
                if isinstance(c, str):
                    names.add(c)
                else:
                    collect(c)
            for i in block.get("interruptions", []):
                names.update(i["components"])

        collect(sequence)
        components = {n: {"compType": "markdown"} for n in sorted(names)}
    return json.dumps({"components": components, "sequence": sequence, **extra})


def compiled(sequence, components=None, **extra):
    return compile_study(make_doc(sequence, components, **extra)).config


@pytest.fixture
def latin3():
    return compiled(
        {
            "order": "fixed",
            "components": [
                "consent",
                {"order": "latinSquare", "id": "conds", "components": ["A", "B", "C"]},
                "outro",
            ],
        }
    )


@pytest.fixture
def staircase_study():
    return compile_study((STUDIES / "jnd_scatter.json").read_text()).config
