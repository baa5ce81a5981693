"""Per-robot velocity commands.

Each robot's command is the saturated sum of three parts: a forward term
following the planned speed profile along the local tangent, a pairwise
repulsion active inside the mutual avoidance range, and a wall term
pushing back toward the center curve when the avoidance disk would leave
the tube.  The avoidance radius itself grows whenever the measured swarm
density exceeds the planned density at the robot's arc length.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError
from .validation import as_vector2, check_scalar

_EPS_NORM = 1e-12
_EPS_DIST = 1e-6


def saturate(v, v_min, v_max):
    """Rescale v onto the closed speed band [v_min, v_max].

    Identity inside the band; direction is always preserved.  Raises
    DegenerateDirectionError for (near-)zero vectors, which have no
    direction to preserve.
    """
    v = as_vector2(v, "v")
    v_min = check_scalar(v_min, "v_min")
    v_max = check_scalar(v_max, "v_max")
    if not 0.0 < v_min <= v_max:
        raise DegenerateDirectionError("need 0 < v_min <= v_max")
    n = float(np.hypot(v[0], v[1]))
    if n < _EPS_NORM:
        raise DegenerateDirectionError("cannot saturate a zero-direction vector")
    if n < v_min:
        return v * (v_min / n)
    if n > v_max:
        return v * (v_max / n)
    return v.copy()


@dataclass
class ControlCommand:
    """Saturated command plus its pre-saturation components."""

    velocity: np.ndarray
    forward: np.ndarray
    interaction: np.ndarray
    boundary: np.ndarray
    saturated: bool
    degenerate: bool = False


def forward_velocity(robot, tube, profile):
    """Planned speed at the robot's arc length, along the local tangent."""
    coords = tube.project(robot.position)
    v_star, _ = profile.evaluate(coords.arc_length)
    return v_star * coords.tangent


def interaction_velocity(robot, neighbors, params):
    """Repulsion away from every neighbor inside mutual avoidance range.

    Pair j contributes k_m * max(0, (r_a,i + r_a,j)/2 + r_s - d_ij) along
    the unit vector from j to i; distances are floored at 1e-6 m.
    """
    total = np.zeros(2)
    p_i = robot.position
    for other in neighbors:
        if other.id == robot.id:
            continue
        diff = p_i - other.position
        d = max(float(np.hypot(diff[0], diff[1])), _EPS_DIST)
        reach = 0.5 * (robot.avoidance_radius + other.avoidance_radius) + params.r_s
        overlap = reach - d
        if overlap > 0.0:
            total += params.k_m * overlap * (diff / d)
    return total


def _wall_term(coords, avoidance_radius, params):
    offset = coords.radial_fraction * coords.width
    # threshold floored at 0: where the tube is narrower than r_a, the
    # push must stay proportional to the offset, or it would jump by a
    # constant as the robot crosses the center curve
    threshold = max(coords.width - avoidance_radius, 0.0)
    if offset <= threshold or coords.radial_fraction == 0.0:
        return np.zeros(2)
    sign = 1.0 if coords.side == 0.0 else -1.0
    return -sign * params.k_xy * (offset - threshold) * coords.normal


def boundary_velocity(robot, tube, params):
    """Push toward the center curve when the avoidance disk meets the wall.

    Active once the offset exceeds lambda(l) - r_a,i; zero exactly on the
    center curve (no side to push from).
    """
    return _wall_term(tube.project(robot.position), robot.avoidance_radius, params)


def command_from_coords(coords, robot, neighbors, profile, params):
    """velocity_command for a robot whose projection is already known."""
    v_star, _ = profile.evaluate(coords.arc_length)
    fwd = v_star * coords.tangent
    inter = interaction_velocity(robot, neighbors, params)
    wall = _wall_term(coords, robot.avoidance_radius, params)
    raw = fwd + inter + wall
    n = float(np.hypot(raw[0], raw[1]))
    if n < _EPS_NORM:
        return ControlCommand(
            velocity=params.v_min * coords.tangent,
            forward=fwd, interaction=inter, boundary=wall,
            saturated=True, degenerate=True)
    vel = saturate(raw, params.v_min, params.v_max)
    return ControlCommand(
        velocity=vel, forward=fwd, interaction=inter, boundary=wall,
        saturated=not (params.v_min <= n <= params.v_max))


def velocity_command(robot, neighbors, tube, profile, params):
    """Full command: saturated sum of forward, interaction and wall terms.

    A degenerate (zero-direction) sum falls back to v_min along the local
    tangent so the robot keeps moving forward.
    """
    return command_from_coords(tube.project(robot.position), robot,
                               neighbors, profile, params)


def avoidance_radius_rate(rho_r, rho_star, k_ra):
    """Growth rate of the avoidance radius under density overshoot.

    Zero when the measured density rho_r does not exceed the planned
    rho_star; proportional to the overshoot otherwise.
    """
    rho_r = check_scalar(rho_r, "rho_r")
    k_ra = check_scalar(k_ra, "k_ra")
    if rho_r <= rho_star:
        return 0.0
    return k_ra * (rho_r - rho_star)
