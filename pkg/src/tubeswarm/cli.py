"""Command line interface.

Subcommands
-----------
plan      solve the speed/density profile; write <name>.plan.json and the
          dense-grid constraint report <name>.validate.json
simulate  run one simulation mode, write trace CSV + summary JSON;
          --plan FILE supplies a saved profile, otherwise with-planning
          mode plans first automatically
compare   run both modes (concurrently) and write a comparison JSON
validate  check a saved plan file against a scenario on a dense grid;
          exit 0 iff feasible

Output directory: --out flag, else $TUBESWARM_OUT, else the current
directory.  Files are written atomically (temp file + rename) and all
JSON with sorted keys, so repeat runs are byte-identical.  Any failure
prints a one-line error JSON to stderr and exits nonzero.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .planner import PlanProfile, plan, validate_plan
from .scenarios import load_scenario
from .simulator import WITH_PLANNING, WITHOUT_PLANNING, metrics, run, trace_csv

MODE_ALIASES = {
    "with": WITH_PLANNING,
    "without": WITHOUT_PLANNING,
    WITH_PLANNING: WITH_PLANNING,
    WITHOUT_PLANNING: WITHOUT_PLANNING,
}


class UsageError(ValueError):
    """Bad command line or inconsistent inputs."""


class _Parser(argparse.ArgumentParser):
    # raise instead of printing usage + SystemExit, so main() can emit the
    # machine-readable error JSON contract
    def error(self, message):
        raise UsageError(message)


def _out_dir(args):
    out = args.out or os.environ.get("TUBESWARM_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.planner.seed = args.seed
    if getattr(args, "dt", None) is not None:
        cfg.dt = args.dt
    return cfg


def _write_text(path, text):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, payload):
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_plan(path, cfg):
    profile = PlanProfile.from_json(Path(path).read_text(encoding="utf-8"))
    if abs(profile.total_length - cfg.tube.total_length) > 1e-6:
        raise UsageError(
            f"plan file covers {profile.total_length:g} m but scenario "
            f"'{cfg.name}' tube is {cfg.tube.total_length:g} m long")
    return profile


def _plan_profile(cfg):
    return plan(cfg.tube, cfg.params, cfg.planner)


def _summary(cfg, mode, trace):
    stats = metrics(trace, cfg.tube, cfg.params)
    return {
        "scenario": cfg.name,
        "mode": mode,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "completed": trace.completed,
        "timeout": trace.timeout,
        "passing_time": trace.passing_time,
        "steps": trace.n_steps,
        **stats,
    }


def _run_mode(cfg, mode, profile):
    trace = run(cfg.tube, cfg.params, mode=mode, profile=profile,
                dt=cfg.dt, t_max=cfg.t_max, name=cfg.name, seed=cfg.seed)
    return trace, _summary(cfg, mode, trace)


def cmd_plan(args):
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    out_dir = _out_dir(args)
    profile = _plan_profile(cfg)
    out = out_dir / f"{cfg.name}.plan.json"
    _write_text(out, profile.to_json())
    report = validate_plan(profile, cfg.tube, cfg.params, cfg.planner)
    report_path = out_dir / f"{cfg.name}.validate.json"
    _write_text(report_path, report.to_json())
    d = profile.diagnostics
    print(f"{cfg.name}: objective={d['objective']:.6f} "
          f"converged={d['converged']} residual={d['dense_max_residual']:.2e} "
          f"feasible={report.passed}")
    print(f"wrote {out}")
    print(f"wrote {report_path}")
    return 0


def cmd_simulate(args):
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    mode = MODE_ALIASES[args.mode]
    out_dir = _out_dir(args)
    profile = None
    if mode == WITH_PLANNING:
        if args.plan is not None:
            profile = _load_plan(args.plan, cfg)
        else:
            # no plan supplied: solve one first and keep the artifact
            profile = _plan_profile(cfg)
            _write_text(out_dir / f"{cfg.name}.plan.json", profile.to_json())
    elif args.plan is not None:
        raise UsageError("--plan only applies to --mode with")
    trace, summary = _run_mode(cfg, mode, profile)
    csv_path = out_dir / f"{cfg.name}.{mode}.trace.csv"
    _write_text(csv_path, trace_csv(trace))
    json_path = out_dir / f"{cfg.name}.{mode}.summary.json"
    _write_json(json_path, summary)
    print(f"{cfg.name} [{mode}]: passing_time={summary['passing_time']:.2f}s "
          f"min_distance={summary['min_distance']:.3f}m "
          f"collisions={summary['collision_steps']}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def cmd_compare(args):
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    out_dir = _out_dir(args)
    profile = _plan_profile(cfg)
    _write_text(out_dir / f"{cfg.name}.plan.json", profile.to_json())
    with ThreadPoolExecutor(max_workers=2) as pool:
        planned = pool.submit(_run_mode, cfg, WITH_PLANNING, profile)
        baseline = pool.submit(_run_mode, cfg, WITHOUT_PLANNING, None)
        trace_p, summary_p = planned.result()
        trace_b, summary_b = baseline.result()
    for mode, trace in ((WITH_PLANNING, trace_p), (WITHOUT_PLANNING, trace_b)):
        _write_text(out_dir / f"{cfg.name}.{mode}.trace.csv", trace_csv(trace))
    for mode, summary in ((WITH_PLANNING, summary_p), (WITHOUT_PLANNING, summary_b)):
        _write_json(out_dir / f"{cfg.name}.{mode}.summary.json", summary)
    payload = {
        "scenario": cfg.name,
        "dt": cfg.dt,
        "seed": cfg.seed,
        WITH_PLANNING: summary_p,
        WITHOUT_PLANNING: summary_b,
        "safer_with_planning":
            summary_p["min_distance"] > summary_b["min_distance"],
        "faster_with_planning":
            summary_p["passing_time"] < summary_b["passing_time"],
    }
    cmp_path = out_dir / f"{cfg.name}.compare.json"
    _write_json(cmp_path, payload)
    print(f"{cfg.name}: with_planning {summary_p['passing_time']:.2f}s / "
          f"min_d {summary_p['min_distance']:.3f}m | without_planning "
          f"{summary_b['passing_time']:.2f}s / min_d {summary_b['min_distance']:.3f}m")
    print(f"wrote {cmp_path}")
    return 0


def cmd_validate(args):
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    profile = _load_plan(args.plan, cfg)
    report = validate_plan(profile, cfg.tube, cfg.params, cfg.planner)
    out = _out_dir(args) / f"{cfg.name}.validate.json"
    _write_text(out, report.to_json())
    for name, entry in sorted(report.residuals.items()):
        print(f"  {name:24s} max residual {entry['max_residual']: .3e} "
              f"at l={entry['arc_length']:.3f}")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{cfg.name}: {verdict} (tolerance {report.tolerance:.1e}, "
          f"{report.grid_points} grid points)")
    print(f"wrote {out}")
    return 0 if report.passed else 1


def _add_common(sub):
    sub.add_argument("scenario",
                     help="built-in scenario name or path to a scenario JSON")
    sub.add_argument("--out", default=None,
                     help="output directory (default: $TUBESWARM_OUT or '.')")
    sub.add_argument("--seed", type=int, default=None,
                     help="override scenario seed")
    sub.add_argument("--dt", type=float, default=None,
                     help="override simulation time step")


def build_parser():
    parser = _Parser(
        prog="tubeswarm",
        description="Plan and simulate swarm passage through a virtual tube.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("plan", help="solve the speed/density profile")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = subs.add_parser("simulate", help="run one simulation mode")
    _add_common(p)
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), default=WITH_PLANNING,
                   help="with/with_planning or without/without_planning")
    p.add_argument("--plan", default=None, metavar="FILE",
                   help="use this plan JSON instead of solving")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("compare", help="run both modes and compare")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("validate",
                        help="check a saved plan against a scenario")
    p.add_argument("plan", help="path to a plan JSON written by `plan`")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit:          # argparse --help
        raise
    except Exception as exc:    # contract: error JSON on stderr, exit nonzero
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
