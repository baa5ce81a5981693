"""Synchronous explicit-Euler swarm simulation.

Every step reads one immutable snapshot, computes all commands from it,
applies per-step command-rate clamps (norm change at most a_v*dt, heading
change at most (a_n/speed)*dt), then integrates positions and avoidance
radii.  Runs end when the last robot's projection reaches the tube exit
or at the timeout 10*L/v_min.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .controller import avoidance_radius_rate, command_from_coords
from .planner import ConstantProfile
from .swarm import RobotState, window_area

WITH_PLANNING = "with_planning"
WITHOUT_PLANNING = "without_planning"
MODES = (WITH_PLANNING, WITHOUT_PLANNING)


@dataclass
class WorldState:
    """Immutable-by-convention snapshot of one simulation instant."""

    tube: object
    robots: list
    time: float = 0.0
    mode: str = WITH_PLANNING


@dataclass
class StepRecord:
    """Everything recorded about one step (state at entry + applied commands)."""

    time: float
    positions: np.ndarray      # (N, 2)
    commands: np.ndarray       # (N, 2) applied over [time, time+dt)
    radii: np.ndarray          # (N,) avoidance radii at entry
    arc_lengths: np.ndarray    # (N,)
    offsets: np.ndarray        # (N,) |radial offset| in meters
    widths: np.ndarray         # (N,) lambda at the projection
    rho_r: float               # measured swarm density
    rho_star: float            # planned density at the window center
    v_star: float              # planned speed at the window center
    v_measured: float          # mean tangential command speed
    expansion: bool            # any avoidance radius growing this step
    norm_clamps: int
    heading_clamps: int


@dataclass
class TraceReport:
    name: str
    mode: str
    dt: float
    n_robots: int
    steps: list = field(default_factory=list)
    passing_time: float = math.nan
    completed: bool = False
    timeout: bool = False

    @property
    def n_steps(self):
        return len(self.steps)


def baseline_profile(params):
    """No-planning reference: constant mid-band speed, no density target."""
    return ConstantProfile(0.5 * (params.v_min + params.v_max), math.inf)


def initial_formation(tube, params, seed=None, jitter=0.05):
    """Grid start formation just inside the tube entrance.

    ceil(sqrt(N)) columns across the tube, rows spaced 2*r_a along it;
    the trailing row sits exactly at l=0 so passing times cover the full
    tube length.  With a seed, positions are perturbed uniformly within
    +-jitter: an exact grid is mirror-symmetric about the center curve,
    and symmetric partners would meet the centerline simultaneously in a
    symmetric tube, which no physical formation reproduces.
    """
    n = params.n_robots
    cols = math.isqrt(n - 1) + 1
    rows = -(-n // cols)
    spacing = 2.0 * params.r_a
    offsets = np.zeros((n, 2))
    if seed is not None and jitter > 0.0:
        rng = np.random.default_rng(seed)
        offsets = rng.uniform(-jitter, jitter, size=(n, 2))
    robots = []
    for k in range(n):
        row, col = divmod(k, cols)
        l = (rows - 1 - row) * spacing
        lateral = (col - 0.5 * (cols - 1)) * spacing
        pos = tube.point(l) + lateral * tube.normal(l) + offsets[k]
        robots.append(RobotState(id=k, position=pos,
                                 velocity_command=np.zeros(2),
                                 avoidance_radius=params.r_a))
    return robots


def _rate_clamped(prev, cmd, dt, params):
    """Apply norm- and heading-rate clamps relative to the previous command."""
    prev_norm = float(np.hypot(prev[0], prev[1]))
    if prev_norm < 1e-12:
        return cmd, False, False  # no previous command (first step)
    target_norm = float(np.hypot(cmd[0], cmd[1]))
    lo, hi = prev_norm - params.a_v * dt, prev_norm + params.a_v * dt
    norm = min(max(target_norm, lo), hi)
    norm = min(max(norm, params.v_min), params.v_max)
    norm_clamped = abs(norm - target_norm) > 1e-12

    prev_dir = prev / prev_norm
    cmd_dir = cmd / target_norm
    cross = prev_dir[0] * cmd_dir[1] - prev_dir[1] * cmd_dir[0]
    dot = min(max(prev_dir[0] * cmd_dir[0] + prev_dir[1] * cmd_dir[1], -1.0), 1.0)
    angle = math.atan2(abs(cross), dot)
    max_angle = (params.a_n / norm) * dt
    if angle <= max_angle:
        return norm * cmd_dir, norm_clamped, False
    sign = 1.0 if cross >= 0.0 else -1.0
    rot = sign * max_angle
    c, s = math.cos(rot), math.sin(rot)
    new_dir = np.array([c * prev_dir[0] - s * prev_dir[1],
                        s * prev_dir[0] + c * prev_dir[1]])
    return norm * new_dir, norm_clamped, True


def _advance(world, coords, dt, profile, params):
    """One Euler step from a snapshot with precomputed projections."""
    robots = world.robots
    n = len(robots)
    ls = np.array([c.arc_length for c in coords])
    rho_r = n / window_area(ls, world.tube, params)

    commands = np.empty((n, 2))
    norm_clamps = heading_clamps = 0
    rates = np.empty(n)
    for i, (robot, c) in enumerate(zip(robots, coords)):
        cmd = command_from_coords(c, robot, robots, profile, params)
        clamped, nflag, hflag = _rate_clamped(
            robot.velocity_command, cmd.velocity, dt, params)
        commands[i] = clamped
        norm_clamps += nflag
        heading_clamps += hflag
        _, rho_star_i = profile.evaluate(c.arc_length)
        rates[i] = avoidance_radius_rate(rho_r, rho_star_i, params.k_ra)

    l_center = 0.5 * (float(np.min(ls)) + float(np.max(ls)))
    v_star_c, rho_star_c = profile.evaluate(l_center)
    tangents = np.array([c.tangent for c in coords])
    v_measured = float(np.mean(np.sum(commands * tangents, axis=1)))

    record = StepRecord(
        time=world.time,
        positions=np.array([r.position for r in robots]),
        commands=commands.copy(),
        radii=np.array([r.avoidance_radius for r in robots]),
        arc_lengths=ls,
        offsets=np.array([c.radial_fraction * c.width for c in coords]),
        widths=np.array([c.width for c in coords]),
        rho_r=float(rho_r),
        rho_star=float(rho_star_c),
        v_star=float(v_star_c),
        v_measured=v_measured,
        expansion=bool(np.any(rates > 0.0)),
        norm_clamps=norm_clamps,
        heading_clamps=heading_clamps,
    )

    new_robots = [
        RobotState(
            id=r.id,
            position=r.position + dt * commands[i],
            velocity_command=commands[i].copy(),
            avoidance_radius=min(r.avoidance_radius + dt * rates[i],
                                 params.r_a_max),
        )
        for i, r in enumerate(robots)
    ]
    return WorldState(tube=world.tube, robots=new_robots,
                      time=world.time + dt, mode=world.mode), record


def step(world, dt, profile, params):
    """Advance one synchronous Euler step; returns the new WorldState."""
    coords = [world.tube.project(r.position) for r in world.robots]
    new_world, _ = _advance(world, coords, dt, profile, params)
    return new_world


def run(tube, params, mode, profile=None, dt=0.01, t_max=None, name="",
        seed=0):
    """Simulate a full traversal; returns a TraceReport.

    mode "with_planning" follows the given profile (required); mode
    "without_planning" uses the constant mid-band baseline with fixed
    avoidance radii.  The seed only perturbs the start formation; given
    the seed, the run is fully deterministic.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == WITHOUT_PLANNING:
        profile = baseline_profile(params)
    elif profile is None:
        raise ValueError("with_planning runs need a profile")
    if t_max is None:
        t_max = 10.0 * tube.total_length / params.v_min

    world = WorldState(tube=tube,
                       robots=initial_formation(tube, params, seed=seed),
                       time=0.0, mode=mode)
    trace = TraceReport(name=name, mode=mode, dt=dt, n_robots=params.n_robots)
    L = tube.total_length
    while True:
        coords = [tube.project(r.position) for r in world.robots]
        last_l = min(c.arc_length for c in coords)
        if last_l >= L - 1e-9:
            trace.passing_time = world.time
            trace.completed = True
            break
        if world.time >= t_max - 1e-12:
            trace.passing_time = world.time
            trace.timeout = True
            break
        world, record = _advance(world, coords, dt, profile, params)
        trace.steps.append(record)
    return trace


# ---------------------------------------------------------------------------
# metrics and serialization


def metrics(trace, tube, params):
    """Summary metrics recomputed from the recorded trace."""
    steps = trace.steps
    if not steps:
        return {
            "passing_time": trace.passing_time, "completed": trace.completed,
            "timeout": trace.timeout, "n_steps": 0,
        }
    min_dists = np.array([float(np.min(pdist(s.positions))) for s in steps])
    min_distance = float(np.min(min_dists))
    collision_threshold = 2.0 * params.r_p
    collision_steps = int(np.sum(min_dists < collision_threshold))

    margin = params.r_p
    violations = 0
    for s in steps:
        violations += int(np.sum(s.offsets > s.widths - margin + 1e-12))

    # tracking errors, evaluated while the swarm is fully inside the tube
    # (once the front reaches the exit the occupancy window degenerates)
    L = tube.total_length
    inside = np.array([float(np.max(s.arc_lengths)) < L - 1e-9 for s in steps])
    rho_err = np.array([s.rho_r - s.rho_star for s in steps])
    active = np.array([s.rho_r > s.rho_star for s in steps]) & inside
    density_rmse = float(np.sqrt(np.mean(rho_err[active] ** 2))) if np.any(active) else 0.0
    v_err = np.array([s.v_measured - s.v_star for s in steps])[inside]
    speed_rmse = float(np.sqrt(np.mean(v_err ** 2))) if v_err.size else 0.0

    expansion_times = [s.time for s in steps if s.expansion]
    cmd_norms = np.concatenate([
        np.hypot(s.commands[:, 0], s.commands[:, 1]) for s in steps])

    return {
        "passing_time": float(trace.passing_time),
        "completed": bool(trace.completed),
        "timeout": bool(trace.timeout),
        "n_steps": len(steps),
        "min_distance": min_distance,
        "collision_steps": collision_steps,
        "boundary_violations": int(violations),
        "density_tracking_rmse": density_rmse,
        "speed_tracking_rmse": speed_rmse,
        "first_expansion_time": float(expansion_times[0]) if expansion_times else None,
        "min_command_speed": float(np.min(cmd_norms)),
        "max_command_speed": float(np.max(cmd_norms)),
        "norm_clamp_events": int(sum(s.norm_clamps for s in steps)),
        "heading_clamp_events": int(sum(s.heading_clamps for s in steps)),
    }


_CSV_HEADER = "time,robot_id,x,y,vx,vy,r_a,l,offset"


def trace_csv(trace):
    """Long-format CSV: one row per (step, robot), %.17g floats."""
    lines = [_CSV_HEADER]
    g = "%.17g"
    for s in trace.steps:
        t = g % s.time
        for i in range(trace.n_robots):
            lines.append(",".join((
                t, str(i),
                g % s.positions[i, 0], g % s.positions[i, 1],
                g % s.commands[i, 0], g % s.commands[i, 1],
                g % s.radii[i],
                g % s.arc_lengths[i],
                g % s.offsets[i],
            )))
    return "\n".join(lines) + "\n"
