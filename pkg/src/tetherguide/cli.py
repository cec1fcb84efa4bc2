"""Command-line front end: ``tetherguide {simulate,follow,analyze,sweep,acceptance}``.

Exit codes: 0 pass, 1 acceptance failure, 2 input error, 3 simulation abort,
4 analysis check failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, campaign
from .config import load_config, scenario_from_config
from .errors import ConfigError, InfeasibleForce, MissingLogs
from .sim import read_csv, run, write_csv

EXIT_OK, EXIT_ACCEPTANCE, EXIT_INPUT, EXIT_ABORT, EXIT_CHECK = 0, 1, 2, 3, 4


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def _load_scenario(path):
    cfg = load_config(path)
    return cfg, scenario_from_config(cfg)


def cmd_simulate(args) -> int:
    try:
        cfg, sc = _load_scenario(args.config)
    except InfeasibleForce as exc:
        _err(f"{exc} (force feasibility of the regulation equilibrium)")
        return EXIT_INPUT
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj = run(sc)
    report = campaign.run_report(sc, traj, 1e-6 * campaign.tol_scale())
    code = EXIT_OK if traj.ok else EXIT_ABORT
    report["exit_code"] = code
    if args.csv:
        write_csv(traj, out / "trajectory.csv")
    if args.svg:
        campaign.plot_run(out / "plots.svg", sc, traj)
    _dump(report, out / "report.json")
    if not traj.ok:
        _err(f"simulation aborted at t = {traj.abort_time:.6g} s ({traj.status})")
    else:
        print(f"final position error {report['final_position_error']:.6g} m; report in {out / 'report.json'}")
    return code


def cmd_follow(args) -> int:
    try:
        cfg = load_config(args.config)
        result = campaign.follow_campaign(cfg, args.runs, args.randomize_human)
    except InfeasibleForce as exc:
        _err(f"{exc} (force feasibility of the regulation equilibrium)")
        return EXIT_INPUT
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT
    out = Path(args.out)
    summary = campaign.write_follow_outputs(result, out, want_svg=args.svg)
    aborted = [j for j, tr in enumerate(result.trajectories) if not tr.ok]
    summary["exit_code"] = EXIT_ABORT if aborted else EXIT_OK
    _dump(summary, out / "report.json")
    if aborted:
        _err(f"runs {aborted} aborted")
        return EXIT_ABORT
    agg = summary["aggregate"]
    if agg is not None:
        print(f"{args.runs} runs: max |mean error| {agg['max_abs_mean']:.4g} m, max std {agg['max_std']:.4g} m")
    return EXIT_OK


def cmd_analyze(args) -> int:
    port = "combined" if args.port == "both" else args.port
    try:
        cfg, sc = _load_scenario(args.config)
        traj = read_csv(args.trajectory)
        traj.task_type = cfg["task"]["type"]
        scale = campaign.tol_scale()
        refs_T = sc.terminal_refs()
        rep = analysis.passivity_report(traj, port, refs_T, sc.params, 1e-6 * scale)
    except (ConfigError, InfeasibleForce) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except MissingLogs as exc:
        _err(f"MissingLogs: {exc}")
        return EXIT_INPUT
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = {"passivity": rep.to_dict()}
    ok = rep.passed
    constant_refs = traj.task_type == "point" and traj.u_H is not None and not np.any(traj.u_H)
    if constant_refs:
        mono = analysis.check_monotone(traj, refs_T, sc.params, 1e-6 * scale)
        result["monotone"] = mono.__dict__
        ok = ok and mono.passed
    result["exit_code"] = EXIT_OK if ok else EXIT_CHECK
    _dump(result, out / "passivity.json")
    traj.V = analysis.lyapunov_series(traj.x, refs_T, sc.params)
    campaign.plot_storage(out / "storage.svg", traj)
    print(f"port {port}: margin {rep.margin:.6g} J ({'pass' if rep.passed else 'FAIL'})")
    return result["exit_code"]


def _parse_values(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values expects comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    if len(args.param) != len(args.values):
        _err("give one --values list per --param")
        return EXIT_INPUT
    if not 1 <= len(args.param) <= 2:
        _err("sweep over one or two parameters")
        return EXIT_INPUT
    try:
        cfg = load_config(args.config)
        grid = [(p, _parse_values(v)) for p, v in zip(args.param, args.values)]
        from .config import schema_has

        for p, _ in grid:
            if not schema_has(p):
                raise ConfigError(f"unknown parameter path {p!r}")
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT
    rows = campaign.sweep(cfg, grid, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    campaign.write_sweep_table(rows, args.param, out / "sweep.csv")
    for r in rows:
        if r["status"] in ("infeasible", "invalid"):
            print(f"row {r['id']} {r['status']}: {r['note']}", file=sys.stderr)
    print(f"{len(rows)} rows written to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_acceptance(args) -> int:
    from . import acceptance

    if args.list:
        for c in acceptance.CRITERIA:
            print(f"{c.number:2d}  {c.title}")
        return EXIT_OK
    selected = acceptance.CRITERIA if not args.only else [c for c in acceptance.CRITERIA if c.number in args.only]
    results = acceptance.run_all(selected, scale=campaign.tol_scale())
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_OK if not failed else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tetherguide", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("config")
    s.add_argument("--out", default="out")
    s.add_argument("--csv", action="store_true", help="write trajectory.csv")
    s.add_argument("--svg", action="store_true", help="write plots.svg")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("follow", help="path-following campaign")
    f.add_argument("config")
    f.add_argument("--runs", type=int, default=8)
    f.add_argument("--randomize-human", action="store_true", help="scale m_H and B_H by seeded factors in [0.5, 1.5]")
    f.add_argument("--out", default="out")
    f.add_argument("--no-svg", dest="svg", action="store_false")
    f.set_defaults(func=cmd_follow)

    a = sub.add_parser("analyze", help="passivity and storage checks on a trajectory CSV")
    a.add_argument("trajectory")
    a.add_argument("config")
    a.add_argument("--port", choices=("robot", "human", "both"), default="both")
    a.add_argument("--out", default="out")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="parameter grid over one or two config entries")
    w.add_argument("config")
    w.add_argument("--param", action="append", required=True, help="dotted path, e.g. guidance.kp")
    w.add_argument("--values", action="append", required=True, help="comma-separated values")
    w.add_argument("--jobs", type=int, default=None)
    w.add_argument("--out", default="out")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("acceptance", help="run the acceptance suite")
    c.add_argument("--list", action="store_true", help="list criteria without running them")
    c.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    c.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
