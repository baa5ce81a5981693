"""Swarm state containers and swarm-level measurement tests."""

import numpy as np
import pytest

from tubeswarm import (RobotState, SwarmParams, VirtualTube,
                       average_forward_speed, front_robot, last_robot,
                       min_pairwise_distance, swarm_area, swarm_density,
                       window_area)
from tubeswarm.errors import DomainError, EmptySwarmError


def robots_at(tube, arc_lengths, ids=None):
    ids = range(len(arc_lengths)) if ids is None else ids
    return [RobotState(id=i, position=tube.point(l))
            for i, l in zip(ids, arc_lengths)]


# ---------------------------------------------------------------------------
# RobotState / SwarmParams


def test_robot_state_coerces_arrays():
    r = RobotState(id=3, position=[1, 2])
    assert r.position.dtype == float and r.position.shape == (2,)
    np.testing.assert_array_equal(r.velocity_command, [0.0, 0.0])
    assert r.avoidance_radius == 0.0


def test_params_table1_defaults():
    p = SwarmParams()
    assert (p.n_robots, p.v_min, p.v_max) == (20, 2.0, 5.0)
    assert (p.a_v, p.a_n) == (1.0, 1.0)
    assert (p.r_p, p.r_s, p.r_a) == (0.3, 0.4, 0.8)
    assert p.rho_d == 0.1989


def test_params_derived_defaults():
    p = SwarmParams()
    assert abs(p.rho_max - 1.0 / 0.09) < 1e-9   # 1/r_p^2
    assert p.r_a_max == 1.6                      # 2 r_a


def test_params_overrides_kept():
    p = SwarmParams(rho_max=0.9974, r_a_max=2.5)
    assert p.rho_max == 0.9974 and p.r_a_max == 2.5


def test_params_validation():
    with pytest.raises(DomainError):
        SwarmParams(v_min=0.0)
    with pytest.raises(DomainError):
        SwarmParams(v_min=6.0, v_max=5.0)
    with pytest.raises(DomainError):
        SwarmParams(r_p=0.5, r_s=0.4)
    with pytest.raises(DomainError):
        SwarmParams(r_s=0.9)          # r_s > r_a
    with pytest.raises(DomainError):
        SwarmParams(n_robots=0)
    with pytest.raises(DomainError):
        SwarmParams(k_m=-1.0)
    with pytest.raises(DomainError):
        SwarmParams(r_a_max=0.5)      # below r_a
    with pytest.raises(DomainError):
        SwarmParams(rho_d=-0.1)


# ---------------------------------------------------------------------------
# front / last


def test_single_robot_is_front_and_last(straight_tube):
    (r,) = robots_at(straight_tube, [4.0])
    assert front_robot([r], straight_tube) is r
    assert last_robot([r], straight_tube) is r


def test_front_last_ordering(straight_tube):
    rs = robots_at(straight_tube, [4.0, 7.0, 10.0])
    assert front_robot(rs, straight_tube).id == 2
    assert last_robot(rs, straight_tube).id == 0


def test_front_last_tie_breaks_to_lowest_id(straight_tube):
    rs = robots_at(straight_tube, [6.0, 6.0], ids=[5, 2])
    assert front_robot(rs, straight_tube).id == 2
    assert last_robot(rs, straight_tube).id == 2


def test_front_last_empty_swarm(straight_tube):
    with pytest.raises(EmptySwarmError):
        front_robot([], straight_tube)
    with pytest.raises(EmptySwarmError):
        last_robot([], straight_tube)


def test_front_at_least_last(straight_tube, table1_params):
    rng = np.random.default_rng(7)
    for _ in range(50):
        rs = robots_at(straight_tube, rng.uniform(0.0, 10.0, size=6))
        lf = straight_tube.project(front_robot(rs, straight_tube).position).arc_length
        ll = straight_tube.project(last_robot(rs, straight_tube).position).arc_length
        assert lf >= ll


# ---------------------------------------------------------------------------
# areas and density


def test_swarm_area_constant_width(straight_tube, table1_params):
    rs = robots_at(straight_tube, [4.0, 6.0, 10.0])
    assert abs(swarm_area(rs, straight_tube, table1_params) - 24.0) < 1e-9


def test_swarm_area_linear_width(table1_params):
    tube = VirtualTube.chain([0, 0], [1, 0], [("straight", 40.0)],
                             [(0.0, 5.0), (40.0, 1.0)])
    rs = robots_at(tube, [0.0, 5.0, 10.0])
    assert abs(swarm_area(rs, tube, table1_params) - 90.0) < 1e-9


def test_swarm_area_degenerate_window(straight_tube, table1_params):
    rs = robots_at(straight_tube, [5.0] * 20)
    # floor N * (2 r_p)^2 = 20 * 0.36
    assert swarm_area(rs, straight_tube, table1_params) == pytest.approx(7.2)


def test_swarm_density_example(table1_params):
    tube = VirtualTube.chain([0, 0], [1, 0], [("straight", 40.0)],
                             [(0.0, 5.0), (40.0, 1.0)])
    ls = np.linspace(0.0, 10.0, 20)
    rs = robots_at(tube, ls)
    assert swarm_density(rs, tube, table1_params) == pytest.approx(20.0 / 90.0,
                                                                   abs=1e-9)


def test_swarm_density_single_robot_degenerate(straight_tube, table1_params):
    rs = robots_at(straight_tube, [5.0])
    assert swarm_density(rs, straight_tube, table1_params) == pytest.approx(
        1.0 / 0.36)


def test_density_halves_when_width_doubles(table1_params):
    narrow = VirtualTube.chain([0, 0], [1, 0], [("straight", 10.0)],
                               [(0.0, 2.0), (10.0, 2.0)])
    wide = VirtualTube.chain([0, 0], [1, 0], [("straight", 10.0)],
                             [(0.0, 4.0), (10.0, 4.0)])
    ls = [2.0, 5.0, 8.0]
    d_narrow = swarm_density(robots_at(narrow, ls), narrow, table1_params)
    d_wide = swarm_density(robots_at(wide, ls), wide, table1_params)
    assert d_wide == pytest.approx(0.5 * d_narrow, rel=1e-12)


def test_density_decreases_as_window_widens(straight_tube, table1_params):
    prev = None
    for half in np.linspace(0.5, 4.5, 9):
        ls = [5.0 - half, 5.0 + half]
        d = window_area(ls, straight_tube, table1_params)
        if prev is not None:
            assert d > prev   # area grows, so density N/area falls
        prev = d


def test_window_area_empty(straight_tube, table1_params):
    with pytest.raises(EmptySwarmError):
        window_area([], straight_tube, table1_params)


# ---------------------------------------------------------------------------
# speeds and distances


def test_average_forward_speed_examples():
    assert average_forward_speed([5.0, 5.0, 5.0]) == 5.0
    assert average_forward_speed([2.0, 4.0]) == 3.0


def test_average_forward_speed_permutation_invariant():
    vals = [2.0, 3.5, 4.1, 4.9]
    assert average_forward_speed(vals) == average_forward_speed(vals[::-1])


def test_average_forward_speed_empty():
    with pytest.raises(EmptySwarmError):
        average_forward_speed([])


def test_min_pairwise_distance_examples():
    a = RobotState(id=0, position=[0.0, 0.0])
    b = RobotState(id=1, position=[3.0, 4.0])
    assert min_pairwise_distance([a, b]) == 5.0
    c = RobotState(id=2, position=[0.0, 0.0])
    assert min_pairwise_distance([a, b, c]) == 0.0


def test_min_pairwise_distance_needs_two():
    with pytest.raises(EmptySwarmError):
        min_pairwise_distance([RobotState(id=0, position=[0.0, 0.0])])
