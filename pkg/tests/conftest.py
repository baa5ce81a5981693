"""Shared fixtures.

The four built-in narrowing cases are planned and simulated once per
session; the acceptance tests and several integration tests share those
results, so the expensive closed-loop runs happen exactly once.
"""

import math
import time

import pytest

from tubeswarm import (WITH_PLANNING, WITHOUT_PLANNING, SwarmParams,
                       VirtualTube, load_scenario, metrics, plan, run)

CASES = ("caseA", "caseB", "caseC", "caseD")


@pytest.fixture(scope="session")
def table1_params():
    return SwarmParams()


@pytest.fixture()
def straight_tube():
    """Straight tube, constant half-width 2, length 10."""
    return VirtualTube.chain([0.0, 0.0], [1.0, 0.0], [("straight", 10.0)],
                             [(0.0, 2.0), (10.0, 2.0)])


@pytest.fixture()
def arc_tube():
    """Quarter arc, radius 10, constant half-width 1."""
    length = 10.0 * math.pi / 2.0
    return VirtualTube.chain([0.0, 0.0], [1.0, 0.0],
                             [("arc", length, 0.1)],
                             [(0.0, 1.0), (length, 1.0)])


@pytest.fixture()
def taper_tube():
    """Straight tube, half-width 5 -> 1.2 over the middle 20 m."""
    return VirtualTube.chain([0.0, 0.0], [1.0, 0.0], [("straight", 50.0)],
                             [(0.0, 5.0), (15.0, 5.0), (35.0, 1.2), (50.0, 1.2)])


@pytest.fixture(scope="session")
def case_configs():
    return {name: load_scenario(name) for name in CASES}


@pytest.fixture(scope="session")
def case_profiles(case_configs):
    """name -> (PlanProfile, planning wall seconds)."""
    out = {}
    for name, cfg in case_configs.items():
        t0 = time.perf_counter()
        profile = plan(cfg.tube, cfg.params, cfg.planner)
        out[name] = (profile, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def case_runs(case_configs, case_profiles):
    """name -> both closed-loop traces, their metrics, and wall time."""
    out = {}
    for name, cfg in case_configs.items():
        profile = case_profiles[name][0]
        t0 = time.perf_counter()
        planned = run(cfg.tube, cfg.params, mode=WITH_PLANNING,
                      profile=profile, dt=cfg.dt, seed=cfg.seed, name=name)
        baseline = run(cfg.tube, cfg.params, mode=WITHOUT_PLANNING,
                       dt=cfg.dt, seed=cfg.seed, name=name)
        wall = time.perf_counter() - t0
        out[name] = {
            "planned": planned,
            "baseline": baseline,
            "planned_metrics": metrics(planned, cfg.tube, cfg.params),
            "baseline_metrics": metrics(baseline, cfg.tube, cfg.params),
            "sim_seconds": wall,
        }
    return out


@pytest.fixture(scope="session")
def straight_plan():
    """Analytic-optimum scenario: solved profile plus wall seconds."""
    cfg = load_scenario("straight")
    t0 = time.perf_counter()
    profile = plan(cfg.tube, cfg.params, cfg.planner)
    return cfg, profile, time.perf_counter() - t0
