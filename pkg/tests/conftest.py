import pathlib

import pytest

from cryoloop.scenario import Scenario

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"

FLOWING_SENSORS = ["T1", "T2", "T3", "T4", "T5", "T6", "T9", "T10", "T11", "T12"]


def load_scenario(name: str) -> Scenario:
    return Scenario.load(SCENARIO_DIR / name)


@pytest.fixture(scope="session")
def cooldown_frames():
    """Telemetry of the single-experiment cooldown scenario (3 h)."""
    return load_scenario("cooldown_single.yaml").run()


@pytest.fixture(scope="session")
def connect_frames():
    """Telemetry of the connect-warm-experiment scenario (2 h)."""
    return load_scenario("connect_second.yaml").run()


@pytest.fixture(scope="session")
def table1_report():
    """Steady report for the four-experiment scaled configuration."""
    from cryoloop.presets import paper_topology
    from cryoloop.steady import solve_steady

    topology = paper_topology(4)
    loads = {"exp1": 75.0, "exp2": 12.0, "exp3": 12.0, "exp4": 12.0}
    return solve_steady(topology, 21000.0, loads, 20e5)
