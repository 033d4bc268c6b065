from pathlib import Path

import pytest

from attacktree.dsl import load_forest
from attacktree.model import resolve_refs

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
LAYERED = FIXTURES / "layered.atk"
SOA = FIXTURES / "soa.atk"
ASSETS = FIXTURES / "cacert.assets"
MIT_LAYERED = FIXTURES / "mitigations" / "credential-theft-layered.txt"
MIT_SOA = FIXTURES / "mitigations" / "credential-theft-soa.txt"


@pytest.fixture(scope="session")
def layered():
    return load_forest(LAYERED)


@pytest.fixture(scope="session")
def soa():
    return load_forest(SOA)


@pytest.fixture(scope="session")
def layered_resolved(layered):
    return resolve_refs(layered)


@pytest.fixture(scope="session")
def soa_resolved(soa):
    return resolve_refs(soa)


_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::", 1)[-1]
        _acceptance.append(("PASS" if report.passed else "FAIL", name))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _acceptance:
        terminalreporter.write_line(f"{status}  {name}")
