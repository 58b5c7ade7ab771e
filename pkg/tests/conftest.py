import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geocert.io import read_csv_image, read_labels
from geocert.verifier import load_network

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def digits8():
    return [read_csv_image(DATA / "digits8" / f"digit_{d}.csv") for d in range(10)]


@pytest.fixture(scope="session")
def toy_net():
    return load_network(DATA / "toy" / "network.json")


@pytest.fixture(scope="session")
def toy_images():
    return [read_csv_image(DATA / "toy" / f"test_{k:02d}.csv") for k in range(20)]


@pytest.fixture(scope="session")
def toy_labels():
    return read_labels(DATA / "toy" / "labels.txt")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def load_attack_json(name):
    return json.loads((DATA / "attacks" / name).read_text())
