import json
import sys
from pathlib import Path

import numpy as np
import pytest

from aluid import dataset as ds_mod
from aluid.plant import PlantParams

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent / "oracles"))


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text())


@pytest.fixture(scope="session")
def params():
    return PlantParams.default()


@pytest.fixture(scope="session")
def small_corpus():
    setup = ds_mod.SimulationSetup(steps=300)
    return ds_mod.build_corpus(3, 2, setup, master_seed=5)


def random_box_samples(rng, n, params):
    """Vectorized draws of (state, input) over the initial-condition box."""
    box = ds_mod.InitBox()
    states = np.array([ds_mod.sample_initial_state(box, rng) for _ in range(n)])
    lo = np.array([0.0, 130.0, 0.0, 0.0, 4.5])
    hi = np.array([0.15, 170.0, 0.05, 0.1, 5.5])
    inputs = rng.uniform(lo, hi, size=(n, 5))
    return states, inputs


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
