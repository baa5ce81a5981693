"""Speed/density planning and control for robot swarms in virtual tubes."""

from .controller import (ControlCommand, avoidance_radius_rate,
                         boundary_velocity, forward_velocity,
                         interaction_velocity, saturate, velocity_command)
from .errors import (DegenerateDirectionError, DomainError, EmptySwarmError,
                     PlanInfeasibleError)
from .estimator import SpeedDensityPlanner
from .planner import (ConstantProfile, ConstraintReport, PlanProfile,
                      PlannerConfig, evaluate_plan, max_density, max_density_rate,
                      plan, plan_derivatives, plan_objective, predicted_density,
                      validate_plan)
from .scenarios import (BUILTIN_SCENARIOS, SCENARIO_SCHEMA, ScenarioConfig,
                        load_scenario, measured_initial_density, save_scenario)
from .simulator import (MODES, WITH_PLANNING, WITHOUT_PLANNING, StepRecord,
                        TraceReport, WorldState, baseline_profile,
                        initial_formation, metrics, run, step, trace_csv)
from .swarm import (RobotState, SwarmParams, average_forward_speed, front_robot,
                    last_robot, min_pairwise_distance, swarm_area, swarm_density,
                    window_area)
from .tube import R_CAP, CenterSegment, TubeCoordinates, VirtualTube

__version__ = "0.1.0"

__all__ = [
    "R_CAP",
    "BUILTIN_SCENARIOS",
    "SCENARIO_SCHEMA",
    "MODES",
    "WITH_PLANNING",
    "WITHOUT_PLANNING",
    "CenterSegment",
    "ConstantProfile",
    "ConstraintReport",
    "ControlCommand",
    "DegenerateDirectionError",
    "DomainError",
    "EmptySwarmError",
    "PlanInfeasibleError",
    "PlanProfile",
    "PlannerConfig",
    "RobotState",
    "ScenarioConfig",
    "SpeedDensityPlanner",
    "StepRecord",
    "SwarmParams",
    "TraceReport",
    "TubeCoordinates",
    "VirtualTube",
    "WorldState",
    "average_forward_speed",
    "avoidance_radius_rate",
    "baseline_profile",
    "boundary_velocity",
    "evaluate_plan",
    "forward_velocity",
    "front_robot",
    "initial_formation",
    "interaction_velocity",
    "last_robot",
    "load_scenario",
    "max_density",
    "max_density_rate",
    "measured_initial_density",
    "metrics",
    "min_pairwise_distance",
    "plan",
    "plan_derivatives",
    "plan_objective",
    "predicted_density",
    "run",
    "saturate",
    "save_scenario",
    "step",
    "swarm_area",
    "swarm_density",
    "trace_csv",
    "velocity_command",
    "window_area",
]
