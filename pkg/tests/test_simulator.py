"""Simulator tests: formation, stepping, clamps, metrics, serialization."""

import math

import numpy as np
import pytest

from tubeswarm import (ConstantProfile, PlanProfile, RobotState, SwarmParams,
                       VirtualTube, WorldState, baseline_profile,
                       initial_formation, metrics, run, step, trace_csv)

DT = 0.01


def straight(width=5.0, L=10.0):
    return VirtualTube.chain([0, 0], [1, 0], [("straight", L)],
                             [(0.0, width), (L, width)])


def single_params(**kw):
    return SwarmParams(n_robots=1, **kw)


# ---------------------------------------------------------------------------
# initial formation


def test_formation_grid_shape(case_configs):
    cfg = case_configs["caseA"]
    robots = initial_formation(cfg.tube, cfg.params, seed=None)
    assert len(robots) == 20
    assert [r.id for r in robots] == list(range(20))
    assert all(r.avoidance_radius == cfg.params.r_a for r in robots)
    assert all(np.all(r.velocity_command == 0.0) for r in robots)


def test_formation_rows_and_columns(case_configs):
    cfg = case_configs["caseA"]
    tube = cfg.tube
    robots = initial_formation(tube, cfg.params, seed=None)
    # 20 robots -> 5 columns x 4 rows, spaced 2 r_a = 1.6 m
    head = robots[0]
    np.testing.assert_allclose(
        head.position, tube.point(4.8) - 3.2 * tube.normal(4.8), atol=1e-12)
    # trailing row sits exactly at l = 0; its middle robot on the center curve
    np.testing.assert_allclose(robots[17].position, tube.point(0.0), atol=1e-12)
    # same-row neighbors 1.6 m apart
    for k in (0, 1, 2, 3):
        d = np.linalg.norm(robots[k + 1].position - robots[k].position)
        assert d == pytest.approx(1.6, abs=1e-12)


def test_formation_starts_inside_tube_at_entry(case_configs):
    cfg = case_configs["caseA"]
    robots = initial_formation(cfg.tube, cfg.params, seed=None)
    ls = [cfg.tube.project(r.position).arc_length for r in robots]
    assert min(ls) == pytest.approx(0.0, abs=1e-9)
    assert all(cfg.tube.contains(r.position) for r in robots)


def test_formation_seed_reproducible_and_bounded(case_configs):
    cfg = case_configs["caseA"]
    grid = initial_formation(cfg.tube, cfg.params, seed=None)
    a = initial_formation(cfg.tube, cfg.params, seed=7)
    b = initial_formation(cfg.tube, cfg.params, seed=7)
    c = initial_formation(cfg.tube, cfg.params, seed=8)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.position, rb.position)
    assert any(np.any(ra.position != rc.position) for ra, rc in zip(a, c))
    for ra, rg in zip(a, grid):
        assert np.max(np.abs(ra.position - rg.position)) <= 0.05


def test_baseline_profile_is_midband_constant():
    prof = baseline_profile(SwarmParams())
    assert prof.evaluate(3.0) == (3.5, math.inf)


# ---------------------------------------------------------------------------
# stepping


def test_single_robot_step_advances_by_dt_times_command():
    tube = straight()
    params = single_params()
    world = WorldState(tube=tube, robots=initial_formation(tube, params))
    new = step(world, 0.025, ConstantProfile(2.0), params)
    np.testing.assert_allclose(new.robots[0].position, [0.05, 0.0], atol=1e-15)
    np.testing.assert_allclose(new.robots[0].velocity_command, [2.0, 0.0])
    assert new.time == 0.025


def test_single_robot_passing_time():
    tube = straight()
    params = single_params()
    trace = run(tube, params, mode="with_planning",
                profile=ConstantProfile(2.0), dt=DT)
    assert trace.completed and not trace.timeout
    assert trace.passing_time == pytest.approx(10.0 / 2.0, abs=2 * DT)


def test_run_zero_time_budget_times_out():
    tube = straight()
    params = single_params()
    trace = run(tube, params, mode="with_planning",
                profile=ConstantProfile(2.0), dt=DT, t_max=0.0)
    assert trace.timeout and not trace.completed
    assert trace.n_steps == 0 and trace.passing_time == 0.0
    assert metrics(trace, tube, params) == {
        "passing_time": 0.0, "completed": False, "timeout": True, "n_steps": 0}


def test_run_requires_profile_with_planning():
    with pytest.raises(ValueError):
        run(straight(), single_params(), mode="with_planning")
    with pytest.raises(ValueError):
        run(straight(), single_params(), mode="sideways")


# ---------------------------------------------------------------------------
# exactness and determinism


@pytest.fixture(scope="module")
def short_caseA(case_configs):
    cfg = case_configs["caseA"]
    prof = ConstantProfile(3.5, math.inf)
    kw = dict(dt=DT, t_max=1.5, seed=0)
    return (cfg,
            run(cfg.tube, cfg.params, mode="with_planning", profile=prof, **kw),
            run(cfg.tube, cfg.params, mode="without_planning", **kw))


def test_euler_update_is_exact(short_caseA):
    _, trace, _ = short_caseA
    for a, b in zip(trace.steps, trace.steps[1:]):
        assert np.array_equal(b.positions, a.positions + DT * a.commands)


def test_baseline_equals_constant_profile_bit_for_bit(short_caseA):
    # with a constant-speed, infinite-density profile the planning controller
    # must reduce to the baseline exactly
    _, planned, baseline = short_caseA
    assert planned.n_steps == baseline.n_steps
    for a, b in zip(planned.steps, baseline.steps):
        assert np.array_equal(a.commands, b.commands)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.radii, b.radii)


def test_rerun_is_deterministic(short_caseA):
    cfg, planned, _ = short_caseA
    again = run(cfg.tube, cfg.params, mode="with_planning",
                profile=ConstantProfile(3.5, math.inf), dt=DT, t_max=1.5, seed=0)
    assert again.n_steps == planned.n_steps
    for a, b in zip(again.steps, planned.steps):
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.commands, b.commands)


def test_command_rate_clamps_hold_everywhere(short_caseA):
    cfg, planned, _ = short_caseA
    p = cfg.params
    for a, b in zip(planned.steps, planned.steps[1:]):
        na = np.hypot(a.commands[:, 0], a.commands[:, 1])
        nb = np.hypot(b.commands[:, 0], b.commands[:, 1])
        assert np.all(np.abs(nb - na) <= p.a_v * DT + 1e-9)
        dots = np.sum(a.commands * b.commands, axis=1) / (na * nb)
        ang = np.arccos(np.clip(dots, -1.0, 1.0))
        assert np.all(ang <= (p.a_n / nb) * DT + 1e-9)


def test_norm_clamp_limits_speed_ramp():
    # speed reference jumps 2 -> 5 mid-tube; the clamp turns it into a ramp
    tube = straight(L=20.0)
    params = single_params()
    prof = PlanProfile(breaks=[0.0, 5.0, 20.0],
                       speed_coeffs=[[0, 0, 0, 2.0], [0, 0, 0, 5.0]],
                       density_coeffs=[[0, 0, 0, 1e9], [0, 0, 0, 1e9]])
    trace = run(tube, params, mode="with_planning", profile=prof, dt=DT)
    norms = np.array([np.hypot(*s.commands[0]) for s in trace.steps])
    assert np.max(np.abs(np.diff(norms))) <= params.a_v * DT + 1e-12
    assert sum(s.norm_clamps for s in trace.steps) >= 100
    assert norms[-1] == pytest.approx(5.0, abs=1e-9)


def test_heading_clamp_engages_on_tight_arc_at_speed():
    # at v = 5 on a 10 m-radius arc the tangent slews faster than a_n / v
    L = 10.0 * math.pi / 2
    tube = VirtualTube.chain([0, 0], [1, 0], [("arc", L, 0.1)],
                             [(0.0, 2.0), (L, 2.0)])
    params = single_params()
    trace = run(tube, params, mode="with_planning",
                profile=ConstantProfile(5.0), dt=DT, t_max=3.0)
    assert sum(s.heading_clamps for s in trace.steps) >= 10
    for a, b in zip(trace.steps, trace.steps[1:]):
        na, nb = np.hypot(*a.commands[0]), np.hypot(*b.commands[0])
        dot = float(a.commands[0] @ b.commands[0]) / (na * nb)
        assert math.acos(min(max(dot, -1.0), 1.0)) <= (params.a_n / nb) * DT + 1e-9


def test_avoidance_radii_monotone_and_capped(short_caseA):
    cfg, planned, _ = short_caseA
    prof = PlanProfile(breaks=[0.0, 50.0], speed_coeffs=[[0, 0, 0, 3.5]],
                       density_coeffs=[[0, 0, 0, 0.1]])
    trace = run(cfg.tube, cfg.params, mode="with_planning", profile=prof,
                dt=DT, t_max=3.0, seed=0)
    radii = np.array([s.radii for s in trace.steps])
    assert np.all(np.diff(radii, axis=0) >= -1e-12)
    assert np.all(radii <= cfg.params.r_a_max + 1e-12)
    # rho_r ~ 0.42 over rho* = 0.1 drives expansion immediately
    assert trace.steps[1].expansion
    assert radii[-1, 0] > radii[0, 0]


def test_id_permutation_equivariance():
    # a crowded world stepped 10 times, then the same world with the robot
    # list reversed: per-id trajectories agree to float-summation noise
    tube = straight(width=2.5, L=20.0)
    params = SwarmParams(n_robots=8)
    rng = np.random.default_rng(11)
    pts = []
    while len(pts) < 8:
        cand = np.array([rng.uniform(1.0, 6.0), rng.uniform(-1.5, 1.5)])
        pts.append(cand)
    robots = [RobotState(id=i, position=p, velocity_command=np.zeros(2),
                         avoidance_radius=params.r_a)
              for i, p in enumerate(pts)]
    prof = ConstantProfile(3.0, 0.3)

    def advance(order):
        world = WorldState(tube=tube, robots=[robots[i] for i in order])
        for _ in range(10):
            world = step(world, DT, prof, params)
        return {r.id: r.position for r in world.robots}

    fwd = advance(list(range(8)))
    rev = advance(list(reversed(range(8))))
    for i in range(8):
        np.testing.assert_allclose(rev[i], fwd[i], atol=1e-10)


def test_forward_progress_for_planned_case(case_runs):
    # mean arc length strictly increases every step of the planned caseA run
    trace = case_runs["caseA"]["planned"]
    means = np.array([float(np.mean(s.arc_lengths)) for s in trace.steps])
    assert np.all(np.diff(means) > 0.0)


# ---------------------------------------------------------------------------
# metrics on a synthetic trace


def synthetic_trace():
    from tubeswarm.simulator import StepRecord, TraceReport
    mk = lambda **kw: StepRecord(**kw)
    s0 = mk(time=0.0,
            positions=np.array([[0.0, 0.0], [0.5, 0.0]]),
            commands=np.array([[2.0, 0.0], [3.0, 4.0]]),
            radii=np.array([0.8, 0.8]),
            arc_lengths=np.array([3.0, 4.0]),
            offsets=np.array([0.0, 0.0]),
            widths=np.array([2.0, 2.0]),
            rho_r=0.5, rho_star=0.4, v_star=2.8, v_measured=3.0,
            expansion=False, norm_clamps=1, heading_clamps=2)
    s1 = mk(time=0.01,
            positions=np.array([[0.0, 0.0], [5.0, 0.0]]),
            commands=np.array([[2.5, 0.0], [4.0, 0.0]]),
            radii=np.array([0.8, 0.9]),
            arc_lengths=np.array([4.0, 5.0]),
            offsets=np.array([1.8, 0.0]),
            widths=np.array([2.0, 2.0]),
            rho_r=0.7, rho_star=0.4, v_star=2.8, v_measured=2.6,
            expansion=True, norm_clamps=0, heading_clamps=1)
    return TraceReport(name="synthetic", mode="with_planning", dt=0.01,
                       n_robots=2, steps=[s0, s1], passing_time=42.0,
                       completed=True)


def test_metrics_against_hand_computed_values():
    tube = straight()
    params = SwarmParams(n_robots=2)
    m = metrics(synthetic_trace(), tube, params)
    assert m["passing_time"] == 42.0 and m["completed"] and not m["timeout"]
    assert m["n_steps"] == 2
    assert m["min_distance"] == 0.5
    assert m["collision_steps"] == 1          # 0.5 < 2 r_p = 0.6
    assert m["boundary_violations"] == 1      # 1.8 > 2.0 - r_p
    assert m["density_tracking_rmse"] == pytest.approx(math.sqrt(0.05))
    assert m["speed_tracking_rmse"] == pytest.approx(0.2)
    assert m["first_expansion_time"] == 0.01
    assert m["min_command_speed"] == 2.0
    assert m["max_command_speed"] == 5.0
    assert m["norm_clamp_events"] == 1
    assert m["heading_clamp_events"] == 3


def test_metrics_zero_error_when_tracking_is_perfect():
    trace = synthetic_trace()
    for s in trace.steps:
        s.rho_star = 2.0      # rho_r < rho*: tracking inactive
        s.v_star = s.v_measured
    m = metrics(trace, straight(), SwarmParams(n_robots=2))
    assert m["density_tracking_rmse"] == 0.0
    assert m["speed_tracking_rmse"] == 0.0
    assert m["first_expansion_time"] == 0.01


# ---------------------------------------------------------------------------
# CSV serialization


def test_trace_csv_format_and_roundtrip():
    trace = synthetic_trace()
    text = trace_csv(trace)
    lines = text.splitlines()
    assert lines[0] == "time,robot_id,x,y,vx,vy,r_a,l,offset"
    assert len(lines) == 1 + 2 * 2
    assert text.endswith("\n")
    row = lines[2].split(",")
    assert int(row[1]) == 1
    s0 = trace.steps[0]
    assert float(row[0]) == s0.time
    assert float(row[2]) == s0.positions[1, 0]
    assert float(row[5]) == s0.commands[1, 1]
    assert float(row[6]) == s0.radii[1]
    assert float(row[7]) == s0.arc_lengths[1]


def test_trace_csv_17_digit_floats_survive_roundtrip():
    trace = synthetic_trace()
    trace.steps[0].positions[0, 0] = math.pi * 1e-3
    trace.steps[0].arc_lengths[0] = 1.0 / 3.0
    text = trace_csv(trace)
    row = text.splitlines()[1].split(",")
    assert float(row[2]) == math.pi * 1e-3
    assert float(row[7]) == 1.0 / 3.0
