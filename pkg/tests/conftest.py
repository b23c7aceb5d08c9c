import json
import time
from pathlib import Path

import pytest

from waypoint_mpc.harness import load_scenario, run_closed_loop

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def scenario_doc(name: str) -> dict:
    with open(SCENARIO_DIR / name, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_scenario(name: str, max_steps: int = 600):
    scenario = load_scenario(scenario_doc(name))
    t0 = time.perf_counter()
    result = run_closed_loop(scenario, max_steps=max_steps)
    wall = time.perf_counter() - t0
    return result, wall


@pytest.fixture(scope="session")
def corridor_run():
    return run_scenario("corridor.json")


@pytest.fixture(scope="session")
def demo3_run():
    return run_scenario("demo3.json")


@pytest.fixture(scope="session")
def free_space_run():
    return run_scenario("free_space.json")


@pytest.fixture(scope="session")
def replanning_run():
    return run_scenario("replanning.json")


@pytest.fixture(scope="session")
def all_runs(corridor_run, demo3_run, free_space_run, replanning_run):
    return {
        "corridor": corridor_run,
        "demo3": demo3_run,
        "free_space": free_space_run,
        "replanning": replanning_run,
    }
