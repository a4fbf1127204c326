import random

import pytest

from tokenlab import crypto, uso, utxo
from tokenlab.dlt import Network

_acceptance = {}


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def blind_issuer():
    return utxo.BlindIssuer.generate(random.Random(77), (1, 5, 10))


@pytest.fixture(scope="session")
def uso_issuer():
    return uso.UsoIssuer.generate(random.Random(78), (1, 5, 10))


@pytest.fixture
def network4(rng):
    return Network(4, rng)


@pytest.fixture
def keys(rng):
    return {name: crypto.generate_keypair(rng) for name in ("authority", "alice", "bob", "carol", "dave", "mallory")}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.failed:
        _acceptance[report.nodeid.split("::")[-1]] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}")
