import json
from importlib import resources

import pytest

from depremedy.ecosystem import parse_dataset, parse_manifest

FIXTURES = ("layered", "hard_backtrack", "soft_backtrack", "diamond", "clean")


def load_fixture(name):
    base = resources.files("depremedy") / "fixtures"
    dataset = json.loads((base / f"{name}.dataset.json").read_text(encoding="utf-8"))
    manifest = json.loads((base / f"{name}.manifest.json").read_text(encoding="utf-8"))
    return parse_dataset(dataset), parse_manifest(manifest)


def fixture_paths(name):
    base = resources.files("depremedy") / "fixtures"
    return str(base / f"{name}.dataset.json"), str(base / f"{name}.manifest.json")


@pytest.fixture
def fixture():
    return load_fixture


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
