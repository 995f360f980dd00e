"""Command-line front end.

Exit codes: 0 success, 1 check or assumption failure, 2 schema error,
3 numerical failure or divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import scenario as sc
from .analysis import diagonal_scaling, ultimate_bound
from .errors import (ConsensusError, DivergenceDetected, NumericalFailure, ScenarioError)
from .graph import has_leader_spanning_tree, is_nonsingular_m_matrix, laplacian
from .metrics import summarize
from .simulation import simulate, write_trajectory_csv
from .synthesis import NOMINAL, ROBUST, check_controllable, check_stabilizable

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


def fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(fmt(v) for v in value) + "]"
    return str(value)


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _emit(label, data, out=None):
    out = out or sys.stdout
    print(f"[{label}]", file=out)
    for key, val in data.items():
        if isinstance(val, np.ndarray):
            val = val.tolist()
        print(f"  {key}: {fmt(val)}", file=out)


def cmd_verify(source, out_dir=None):
    doc = sc.load_document(source)
    sc.validate(doc)
    graph = sc.graph_of(doc)
    dyn = sc.dynamics_of(doc)
    mode = sc.mode_of(doc)
    part = laplacian(graph)
    report = {
        "spanning_tree": has_leader_spanning_tree(graph),
        "l1_nonsingular_m_matrix": is_nonsingular_m_matrix(part.l1),
        "stabilizable": check_stabilizable(dyn),
        "controllable": check_controllable(dyn),
        "mode": mode,
    }
    required = ["spanning_tree", "l1_nonsingular_m_matrix",
                "stabilizable" if mode == NOMINAL else "controllable"]
    report["passed"] = all(report[k] for k in required)
    _emit("verify", report)
    if out_dir is not None:
        _write_json(Path(out_dir) / "verify.json", report)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_synthesize(source, out_dir=None):
    doc = sc.load_document(source)
    sc.validate(doc)
    gains = sc.synthesize_gains(doc)
    report = gains.to_dict(sc.dynamics_of(doc))
    _emit("synthesize", report)
    if out_dir is not None:
        _write_json(Path(out_dir) / "gains.json", report)
    return EXIT_OK


def _bound_report(scn):
    part = laplacian(scn.graph)
    cert = diagonal_scaling(part.l1)
    ups, ups0 = scn.disturbance_bounds()
    bound = ultimate_bound(cert, scn.protocol.gains, part.l1, scn.protocol.phi, np.r_[ups0, ups])
    return {**cert.to_dict(), **bound.to_dict()}


def cmd_analyze(source, out_dir=None):
    doc = sc.load_document(source)
    scn = sc.build_scenario(doc)
    if scn.mode != ROBUST:
        print("analyze: the ultimate bound applies to robust-mode scenarios only", file=sys.stderr)
        return EXIT_CHECK
    report = _bound_report(scn)
    _emit("analyze", report)
    if out_dir is not None:
        _write_json(Path(out_dir) / "bounds.json", report)
    return EXIT_OK


def cmd_simulate(source, out_dir=None, dt=None, horizon=None):
    doc = sc.load_document(source)
    scn = sc.build_scenario(doc, dt=dt, horizon=horizon)
    traj = simulate(scn)
    part = laplacian(scn.graph)
    report = summarize(traj, part)
    summary = {"scenario": scn.name, "scenario_hash": scn.digest, "mode": scn.mode,
               "dt": traj.dt, "T": float(traj.times[-1]), **report.to_dict()}
    _emit("simulate", summary)
    bounds = None
    if scn.mode == ROBUST:
        bounds = _bound_report(scn)
        _emit("bounds", {k: bounds[k] for k in ("lambda0", "pi", "radius_sq", "omega_bound")})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, report.xi_norm_series, out / "trajectory.csv")
        _write_json(out / "report.json", summary)
        if bounds is not None:
            _write_json(out / "bounds.json", bounds)
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "synthesize": cmd_synthesize,
            "simulate": cmd_simulate, "analyze": cmd_analyze}


def run(command, source, out_dir=None, dt=None, horizon=None):
    """Run one subcommand and map package errors to exit codes."""
    try:
        if command == "simulate":
            return cmd_simulate(source, out_dir, dt, horizon)
        return COMMANDS[command](source, out_dir)
    except ScenarioError as exc:
        print(f"schema error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (NumericalFailure, DivergenceDetected) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConsensusError as exc:
        condition = getattr(exc, "condition", None)
        tag = f" [{condition}]" if condition else ""
        print(f"{type(exc).__name__}{tag}: {exc}", file=sys.stderr)
        return EXIT_CHECK


def _run_star(args):
    return run(*args)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adaptive-consensus",
        description="Adaptive leader-follower consensus: verify, synthesize, simulate, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", action="append", required=True,
                       help="scenario JSON path or built-in name "
                            f"({', '.join(sc.BUILTINS)}); repeat for a batch")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenarios in a batch")
        if name == "simulate":
            p.add_argument("--dt", type=float, help="override the integration step")
            p.add_argument("--horizon", type=float, help="override the final time T")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    dt = getattr(args, "dt", None)
    horizon = getattr(args, "horizon", None)
    sources = args.scenario
    if len(sources) == 1:
        return run(args.command, sources[0], args.out, dt, horizon)
    jobs = []
    for src in sources:
        out = None
        if args.out is not None:
            out = str(Path(args.out) / (src if src in sc.BUILTINS else Path(src).stem))
        jobs.append((args.command, src, out, dt, horizon))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_star, jobs))
    else:
        codes = [_run_star(j) for j in jobs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
