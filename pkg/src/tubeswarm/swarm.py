"""Robot/swarm state containers and swarm-level measurements."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DomainError, EmptySwarmError
from .validation import as_vector2, check_scalar


@dataclass
class RobotState:
    """Single-integrator robot snapshot.

    velocity_command is the command applied over the last step (zeros
    before the first step); avoidance_radius is the controlled r_a,i.
    """

    id: int
    position: np.ndarray
    velocity_command: np.ndarray = field(default_factory=lambda: np.zeros(2))
    avoidance_radius: float = 0.0

    def __post_init__(self):
        self.position = as_vector2(self.position, "position")
        self.velocity_command = as_vector2(self.velocity_command, "velocity_command")
        self.avoidance_radius = float(self.avoidance_radius)


@dataclass
class SwarmParams:
    """Swarm-wide constants.

    Radii are ordered r_p <= r_s <= r_a (physical, safety, avoidance).
    rho_max defaults to 1/r_p^2 (densest packing at physical contact);
    pass an explicit value to override.  r_a_max defaults to 2*r_a and
    caps the controlled avoidance radius.
    """

    n_robots: int = 20
    v_min: float = 2.0
    v_max: float = 5.0
    a_v: float = 1.0          # max tangential acceleration, m/s^2
    a_n: float = 1.0          # max normal (centripetal) acceleration, m/s^2
    r_p: float = 0.3
    r_s: float = 0.4
    r_a: float = 0.8
    rho_d: float = 0.1989     # desired density, robots/m^2
    rho_max: float = None
    r_a_max: float = None
    k_ra: float = 2.0         # avoidance-radius tracking gain, m^3/s
    k_m: float = 2.5          # inter-robot repulsion gain, 1/s
    k_xy: float = 4.0         # wall-repulsion gain, 1/s

    def __post_init__(self):
        if int(self.n_robots) != self.n_robots or self.n_robots < 1:
            raise DomainError(f"n_robots must be a positive integer, got {self.n_robots}")
        self.n_robots = int(self.n_robots)
        self.v_min = check_scalar(self.v_min, "v_min")
        self.v_max = check_scalar(self.v_max, "v_max")
        if not (0.0 < self.v_min <= self.v_max):
            raise DomainError("need 0 < v_min <= v_max")
        for name in ("a_v", "a_n", "rho_d"):
            value = check_scalar(getattr(self, name), name)
            if value <= 0.0:
                raise DomainError(f"{name} must be > 0")
            setattr(self, name, value)
        self.r_p = check_scalar(self.r_p, "r_p")
        self.r_s = check_scalar(self.r_s, "r_s")
        self.r_a = check_scalar(self.r_a, "r_a")
        if not (0.0 < self.r_p <= self.r_s <= self.r_a):
            raise DomainError("need 0 < r_p <= r_s <= r_a")
        if self.rho_max is None:
            self.rho_max = 1.0 / self.r_p ** 2
        else:
            self.rho_max = check_scalar(self.rho_max, "rho_max")
            if self.rho_max <= 0.0:
                raise DomainError("rho_max must be > 0")
        if self.r_a_max is None:
            self.r_a_max = 2.0 * self.r_a
        else:
            self.r_a_max = check_scalar(self.r_a_max, "r_a_max")
            if self.r_a_max < self.r_a:
                raise DomainError("r_a_max must be >= r_a")
        for name in ("k_ra", "k_m", "k_xy"):
            value = check_scalar(getattr(self, name), name)
            if value < 0.0:
                raise DomainError(f"{name} must be >= 0")
            setattr(self, name, value)


def front_robot(states, tube):
    """Robot whose projection is closest to the tube exit (max l).

    Ties resolve to the lowest robot id.
    """
    if not states:
        raise EmptySwarmError("front_robot needs at least one robot")
    best = None
    for s in sorted(states, key=lambda s: s.id):
        l = tube.project(s.position).arc_length
        if best is None or l > best[0]:
            best = (l, s)
    return best[1]


def last_robot(states, tube):
    """Robot whose projection is farthest from the tube exit (min l)."""
    if not states:
        raise EmptySwarmError("last_robot needs at least one robot")
    best = None
    for s in sorted(states, key=lambda s: s.id):
        l = tube.project(s.position).arc_length
        if best is None or l < best[0]:
            best = (l, s)
    return best[1]


def window_area(arc_lengths, tube, params):
    """Occupied tube area for known projections: integral of 2*lambda
    over [min l, max l], floored at n*(2*r_p)^2 so degenerate windows
    (all robots at one arc length) still yield a positive area."""
    ls = np.asarray(arc_lengths, dtype=float)
    if ls.size == 0:
        raise EmptySwarmError("window_area needs at least one projection")
    area = tube.width_area(float(np.min(ls)), float(np.max(ls)))
    return max(area, ls.size * (2.0 * params.r_p) ** 2)


def swarm_area(states, tube, params):
    """Occupied tube area: integral of 2*lambda over [l_last, l_front].

    Floored at n*(2*r_p)^2 so degenerate windows (all robots at one arc
    length) still yield a positive area.
    """
    if not states:
        raise EmptySwarmError("swarm_area needs at least one robot")
    ls = [tube.project(s.position).arc_length for s in states]
    return window_area(ls, tube, params)


def swarm_density(states, tube, params):
    """Robots per unit occupied area, N / S."""
    return len(states) / swarm_area(states, tube, params)


def average_forward_speed(forward_speeds):
    """Mean of the per-robot forward speeds."""
    speeds = np.asarray(forward_speeds, dtype=float)
    if speeds.size == 0:
        raise EmptySwarmError("average_forward_speed needs at least one speed")
    return float(np.mean(speeds))


def min_pairwise_distance(states):
    """Smallest distance between any two robots."""
    if len(states) < 2:
        raise EmptySwarmError("min_pairwise_distance needs at least two robots")
    positions = np.array([s.position for s in states])
    return float(np.min(pdist(positions)))
