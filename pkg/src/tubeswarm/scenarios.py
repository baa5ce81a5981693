"""Scenario configuration: JSON schema, loading, and built-in cases.

A scenario bundles a tube, swarm parameters, planner knobs, and
simulation settings.  Files are JSON validated against SCENARIO_SCHEMA
(unknown keys are rejected).  Built-ins:

==========  =====================================  ==================
name        center curve                           width profile
==========  =====================================  ==================
caseA       straight, 50 m                         5 -> 1.2 over 20 m
caseB       straight + 90 deg arc (r=25) + exit    5 -> 1.2 over 20 m
caseC       straight, 50 m                         5 -> 1.2 over 5 m
caseD       straight + 90 deg arc (r=25) + exit    5 -> 1.2 over 5 m
straight    straight, 50 m                         constant 5
==========  =====================================  ==================

Tapers are centered at mid-length.  On the arc sqrt(a_n * r) = 5 = v_max,
so the curvature speed limit is exactly marginal there.
"""

import copy
import json
import math
from dataclasses import dataclass

import jsonschema

from .errors import DomainError
from .planner import PlannerConfig
from .swarm import SwarmParams, swarm_density
from .tube import VirtualTube

_NUM = {"type": "number"}
_OPT_NUM = {"type": ["number", "null"]}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "tube"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "tube": {
            "type": "object",
            "required": ["start_point", "start_tangent", "segments", "width_profile"],
            "additionalProperties": False,
            "properties": {
                "start_point": {"type": "array", "items": _NUM,
                                "minItems": 2, "maxItems": 2},
                "start_tangent": {"type": "array", "items": _NUM,
                                  "minItems": 2, "maxItems": 2},
                "segments": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["kind", "length"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["straight", "arc"]},
                            "length": {"type": "number", "exclusiveMinimum": 0},
                            "curvature": _NUM,
                        },
                    },
                },
                "width_profile": {
                    "type": "array",
                    "minItems": 2,
                    "items": {"type": "array", "items": _NUM,
                              "minItems": 2, "maxItems": 2},
                },
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_robots": {"type": "integer", "minimum": 1},
                "v_min": _NUM, "v_max": _NUM, "a_v": _NUM, "a_n": _NUM,
                "r_p": _NUM, "r_s": _NUM, "r_a": _NUM,
                "rho_d": _NUM, "rho_max": _OPT_NUM, "r_a_max": _OPT_NUM,
                "k_ra": _NUM, "k_m": _NUM, "k_xy": _NUM,
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "segment_count": {"type": "integer", "minimum": 1},
                "collocation_count": {"type": "integer", "minimum": 10},
                "delta_l": _OPT_NUM,
                "rho_rate_limit": _OPT_NUM,
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "minimum": 1},
                "boundary_speed": _OPT_NUM,
                "boundary_density": _OPT_NUM,
                "density_prediction": {"enum": ["window", "local_ratio"]},
                "rho_floor": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_max": _OPT_NUM,
                "seed": {"type": "integer"},
            },
        },
    },
}


@dataclass
class ScenarioConfig:
    name: str
    tube: VirtualTube
    params: SwarmParams
    planner: PlannerConfig
    dt: float = 0.01
    t_max: float = None
    seed: int = 0

    def to_dict(self):
        """Canonical JSON-ready dict (defaults resolved)."""
        seg0 = self.tube.segments[0]
        segments = []
        for seg in self.tube.segments:
            entry = {"kind": seg.kind, "length": seg.length}
            if seg.kind == "arc":
                entry["curvature"] = seg.curvature
            segments.append(entry)
        planner = {
            "segment_count": self.planner.segment_count,
            "collocation_count": self.planner.collocation_count,
            "delta_l": self.planner.delta_l,
            "rho_rate_limit": self.planner.rho_rate_limit,
            "tolerance": self.planner.tolerance,
            "max_iterations": self.planner.max_iterations,
            "boundary_speed": self.planner.boundary_speed,
            "boundary_density": self.planner.boundary_density,
            "density_prediction": self.planner.density_prediction,
            "rho_floor": self.planner.rho_floor,
            "seed": self.planner.seed,
        }
        params = {
            "n_robots": self.params.n_robots,
            "v_min": self.params.v_min, "v_max": self.params.v_max,
            "a_v": self.params.a_v, "a_n": self.params.a_n,
            "r_p": self.params.r_p, "r_s": self.params.r_s,
            "r_a": self.params.r_a, "rho_d": self.params.rho_d,
            "rho_max": self.params.rho_max, "r_a_max": self.params.r_a_max,
            "k_ra": self.params.k_ra, "k_m": self.params.k_m,
            "k_xy": self.params.k_xy,
        }
        return {
            "name": self.name,
            "tube": {
                "start_point": [float(x) for x in seg0.start_point],
                "start_tangent": [float(x) for x in seg0.start_tangent],
                "segments": segments,
                "width_profile": [[float(a), float(b)] for a, b in
                                  zip(self.tube._wl, self.tube._ww)],
            },
            "params": params,
            "planner": planner,
            "sim": {"dt": self.dt, "t_max": self.t_max, "seed": self.seed},
        }

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.to_dict() == other.to_dict()


# ---------------------------------------------------------------------------
# built-ins

_L = 50.0
_ARC_RADIUS = 25.0
_ARC_LEN = 0.5 * math.pi * _ARC_RADIUS          # quarter turn
_LEAD = 0.5 * (_L - _ARC_LEN)                   # straight lead-in/out

_STRAIGHT_SEGS = [{"kind": "straight", "length": _L}]
_CURVED_SEGS = [
    {"kind": "straight", "length": _LEAD},
    {"kind": "arc", "length": _ARC_LEN, "curvature": 1.0 / _ARC_RADIUS},
    {"kind": "straight", "length": _LEAD},
]

_ENTRY_W, _NARROW_W = 5.0, 1.2


def _taper(width_change_over):
    half = 0.5 * width_change_over
    return [[0.0, _ENTRY_W], [25.0 - half, _ENTRY_W],
            [25.0 + half, _NARROW_W], [_L, _NARROW_W]]


def _scenario_dict(name, segments, width_profile, planner_extra=None):
    # entry at the mid-band cruise speed (v_min + v_max) / 2: fast enough
    # to keep the comparison fair, slow enough that the packed start can
    # expand before the profile ramps up
    planner = {"density_prediction": "local_ratio", "seed": 0,
               "boundary_speed": 3.5}
    if planner_extra:
        planner.update(planner_extra)
    return {
        "name": name,
        "tube": {
            "start_point": [0.0, 0.0],
            "start_tangent": [1.0, 0.0],
            "segments": copy.deepcopy(segments),
            "width_profile": copy.deepcopy(width_profile),
        },
        "params": {},
        "planner": planner,
        "sim": {"dt": 0.01, "t_max": None, "seed": 0},
    }


BUILTIN_SCENARIOS = {
    "caseA": _scenario_dict("caseA", _STRAIGHT_SEGS, _taper(20.0)),
    "caseB": _scenario_dict("caseB", _CURVED_SEGS, _taper(20.0)),
    "caseC": _scenario_dict("caseC", _STRAIGHT_SEGS, _taper(12.0)),
    "caseD": _scenario_dict("caseD", _CURVED_SEGS, _taper(12.0)),
    "straight": _scenario_dict(
        "straight", _STRAIGHT_SEGS, [[0.0, _ENTRY_W], [_L, _ENTRY_W]],
        planner_extra={"boundary_speed": 5.0, "boundary_density": 0.1989}),
}


def measured_initial_density(tube, params):
    """Density of the start formation; default planner boundary density."""
    from .simulator import initial_formation
    return swarm_density(initial_formation(tube, params), tube, params)


def _build(data):
    jsonschema.validate(data, SCENARIO_SCHEMA)
    tube_spec = data["tube"]
    pieces = []
    for seg in tube_spec["segments"]:
        if seg["kind"] == "straight":
            pieces.append(("straight", seg["length"]))
        else:
            if "curvature" not in seg:
                raise DomainError("arc segments need a curvature")
            pieces.append(("arc", seg["length"], seg["curvature"]))
    tube = VirtualTube.chain(tube_spec["start_point"], tube_spec["start_tangent"],
                             pieces, tube_spec["width_profile"])
    params = SwarmParams(**data.get("params", {}))
    planner = PlannerConfig(**data.get("planner", {}))
    sim = data.get("sim", {})
    cfg = ScenarioConfig(
        name=data["name"], tube=tube, params=params, planner=planner,
        dt=sim.get("dt", 0.01), t_max=sim.get("t_max"), seed=sim.get("seed", 0),
    )
    if cfg.planner.boundary_density is None:
        cfg.planner.boundary_density = measured_initial_density(tube, params)
    return cfg


def load_scenario(source):
    """Load a scenario by built-in name or JSON file path."""
    if isinstance(source, str) and source in BUILTIN_SCENARIOS:
        return _build(copy.deepcopy(BUILTIN_SCENARIOS[source]))
    with open(source, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return _build(data)


def save_scenario(config, path):
    """Write a scenario back to JSON (canonical, defaults resolved)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
