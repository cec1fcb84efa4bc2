"""Run reports, randomized follow campaigns and parameter sweeps shared by the CLI and acceptance."""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .config import params_from_config, scenario_from_config, set_param
from .errors import ConfigError, InfeasibleForce, InsufficientRuns
from .params import HumanParams
from .path import error_stats, path_error_curve, path_eval
from .sim import PathFollowing, Trajectory, run, write_csv
from . import svg

ERROR_GRID = np.linspace(0.0, 1.0, 101)


def tol_scale() -> float:
    """Multiplier applied to every check tolerance, from ``TETHER_TOL_SCALE``."""
    raw = os.environ.get("TETHER_TOL_SCALE", "1")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"TETHER_TOL_SCALE must be a number, got {raw!r}") from None
    if not value > 0:
        raise ConfigError("TETHER_TOL_SCALE must be > 0")
    return value


def applicable_ports(traj: Trajectory) -> list[str]:
    """Ports whose dissipation inequality is claimed for this run.

    The robot port needs a passive human (no voluntary force), the human port
    needs constant references (no time-varying guidance input).
    """
    human_idle = not np.any(traj.u_H)
    refs_const = traj.task_type == "point"
    ports = ["combined"]
    if human_idle:
        ports.insert(0, "robot")
    if refs_const:
        ports.insert(0 if not human_idle else 1, "human")
    return ports


def run_report(scenario, traj: Trajectory, tolerance: float = 1e-6) -> dict:
    """Summary dictionary for a finished (or aborted) run."""
    params = scenario.params
    refs_T = scenario.terminal_refs()
    report = {"status": traj.status, "abort_time": traj.abort_time, "task": traj.task_type,
              "samples": len(traj.t)}
    if len(traj.t) == 0:
        return report
    x_T = traj.x[-1]
    x_e = np.concatenate([refs_T.p_H_ref, np.zeros(3), refs_T.p_R_ref, np.zeros(3)])
    report["final_position_error"] = float(np.linalg.norm(x_T[0:3] - refs_T.p_H_ref))
    report["final_state_error"] = float(np.linalg.norm(x_T - x_e))
    report["robot_altitude"] = float(x_T[8])
    inc = np.diff(traj.V)
    report["max_V_increment"] = float(inc.max()) if len(inc) else 0.0
    ports = applicable_ports(traj)
    report["passivity"] = {}
    for port in analysis.PORTS:
        rep = analysis.passivity_report(traj, port, refs_T, params, tolerance).to_dict()
        rep["applicable"] = port in ports
        report["passivity"][port] = rep
    if traj.task_type == "point" and not np.any(traj.u_H):
        report["monotone"] = analysis.check_monotone(traj, refs_T, params, tolerance).__dict__
    if isinstance(scenario.task, PathFollowing):
        e = path_error_curve(traj.p_H, scenario.task.maneuver.path, ERROR_GRID)
        report["path_error"] = {"mean_abs": float(np.mean(np.abs(e))), "max_abs": float(np.max(np.abs(e)))}
        report["final_s_star"] = float(traj.s_star[-1])
    report["checks_passed"] = bool(
        all(report["passivity"][p]["passed"] for p in ports)
        and report.get("monotone", {}).get("passed", True)
    )
    return report


def convergence_time(traj: Trajectory, refs_T, threshold: float = 0.01):
    """First time after which the human stays within ``threshold`` of its final reference."""
    err = np.linalg.norm(traj.p_H - refs_T.p_H_ref, axis=1)
    outside = np.flatnonzero(err >= threshold)
    if len(outside) == 0:
        return 0.0
    if outside[-1] == len(err) - 1:
        return None
    return float(traj.t[outside[-1] + 1])


# -- plots --------------------------------------------------------------------

def plot_run(path, scenario, traj: Trajectory) -> None:
    refs_T = scenario.terminal_refs()
    xy = svg.Panel("top view", xlabel="x [m]", ylabel="y [m]", equal_aspect=True)
    if isinstance(scenario.task, PathFollowing):
        pth = scenario.task.maneuver.path
        s = np.linspace(0, 1, 400)
        pts = np.array([path_eval(pth, si) for si in s])
        xy.series.append(svg.Series(pts[:, 0], pts[:, 1], "desired path", "#000000", dashed=True))
    else:
        xy.series.append(svg.Series([refs_T.p_H_ref[0]], [refs_T.p_H_ref[1]], "target", "#000000"))
    xy.series.append(svg.Series(traj.p_H[:, 0], traj.p_H[:, 1], "human"))
    xy.series.append(svg.Series(traj.p_R[:, 0], traj.p_R[:, 1], "robot"))
    if isinstance(scenario.task, PathFollowing):
        err = _running_error(scenario, traj)
        err_label = "distance to path"
    else:
        err = np.linalg.norm(traj.p_H - refs_T.p_H_ref, axis=1)
        err_label = "|p_H - p_H_ref|"
    panels = [
        xy,
        svg.Panel("position error", [svg.Series(traj.t, err, err_label)], "t [s]", "m"),
        svg.Panel("cable force", [svg.Series(traj.t, np.linalg.norm(traj.f_c, axis=1), "|f_c|")], "t [s]", "N"),
        svg.Panel("storage function", [svg.Series(traj.t, traj.V, "V")], "t [s]", "J"),
    ]
    svg.write_svg(path, panels)


def _running_error(scenario, traj):
    pth = scenario.task.maneuver.path
    d = np.empty(len(traj.t))
    for i, s in enumerate(traj.s_star):
        d[i] = np.linalg.norm(traj.p_H[i] - path_eval(pth, s))
    return d


def plot_storage(path, traj: Trajectory) -> None:
    svg.write_svg(path, [svg.Panel("storage function", [svg.Series(traj.t, traj.V, "V")], "t [s]", "J")])


# -- follow campaigns -----------------------------------------------------------

def randomized_human(base: HumanParams, seed: int, run_index: int, spread: float = 0.5) -> HumanParams:
    """Human mass and damping scaled by independent factors in [1-spread, 1+spread]."""
    rng = np.random.default_rng([seed, run_index])
    fm, fb = rng.uniform(1.0 - spread, 1.0 + spread, size=2)
    return HumanParams(mass=base.mass * fm, damping=tuple(np.asarray(base.damping) * fb), gravity=base.gravity)


@dataclass
class FollowResult:
    scenarios: list
    trajectories: list
    curves: np.ndarray
    stats: object            # PathErrorReport or None
    reports: list


def follow_campaign(cfg: dict, runs: int, randomize: bool) -> FollowResult:
    if cfg["task"]["type"] != "path":
        raise ConfigError("follow needs a config with a path task")
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    base = params_from_config(cfg)
    seed = cfg.get("sim", {}).get("seed", 0)
    scenarios, trajs, curves, reports = [], [], [], []
    for j in range(runs):
        params = base.with_(human=randomized_human(base.human, seed, j)) if randomize else base
        sc = scenario_from_config(cfg, params)
        tr = run(sc)
        scenarios.append(sc)
        trajs.append(tr)
        reports.append(run_report(sc, tr))
        curves.append(path_error_curve(tr.p_H, sc.task.maneuver.path, ERROR_GRID))
    curves = np.array(curves)
    try:
        stats = error_stats(curves, ERROR_GRID)
    except InsufficientRuns:
        warnings.warn("a single run gives no across-run statistics; reporting per-run curves only")
        stats = None
    return FollowResult(scenarios, trajs, curves, stats, reports)


def write_follow_outputs(result: FollowResult, out: Path, want_svg: bool = True) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    for j, tr in enumerate(result.trajectories):
        write_csv(tr, out / f"run_{j:02d}.csv")
    with open(out / "path_error.csv", "w") as fh:
        cols = ["s"] + [f"run_{j:02d}" for j in range(len(result.curves))]
        if result.stats is not None:
            cols += ["mean", "std"]
        fh.write(",".join(cols) + "\n")
        for i, s in enumerate(ERROR_GRID):
            row = [s, *result.curves[:, i]]
            if result.stats is not None:
                row += [result.stats.mean[i], result.stats.std[i]]
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    summary = {
        "runs": [
            {"index": j, **{k: r[k] for k in ("status", "abort_time", "final_position_error") if k in r},
             "human_mass": sc.params.human.mass, "human_damping": list(sc.params.human.damping),
             "path_error": r.get("path_error")}
            for j, (sc, r) in enumerate(zip(result.scenarios, result.reports))
        ],
        "aggregate": None if result.stats is None else {
            "max_abs_mean": float(np.max(np.abs(result.stats.mean))),
            "max_std": float(np.max(result.stats.std)),
            "max_abs_error": float(np.max(np.abs(result.curves))),
        },
    }
    if want_svg:
        path = result.scenarios[0].task.maneuver.path
        s = np.linspace(0, 1, 400)
        pts = np.array([path_eval(path, si) for si in s])
        top = svg.Panel("human trajectories", [svg.Series(pts[:, 0], pts[:, 1], "desired path", "#000000", True)],
                        "x [m]", "y [m]", equal_aspect=True)
        for j, tr in enumerate(result.trajectories):
            top.series.append(svg.Series(tr.p_H[:, 0], tr.p_H[:, 1], f"run {j}" if j < 8 else ""))
        errp = svg.Panel("path error", [], "s", "m")
        for j, c in enumerate(result.curves):
            errp.series.append(svg.Series(ERROR_GRID, c, "", "#bbbbbb"))
        if result.stats is not None:
            m, sd = result.stats.mean, result.stats.std
            errp.series += [svg.Series(ERROR_GRID, m, "mean", "#1f77b4"),
                            svg.Series(ERROR_GRID, m + sd, "mean +/- std", "#d62728", True),
                            svg.Series(ERROR_GRID, m - sd, "", "#d62728", True)]
        svg.write_svg(out / "overlay.svg", [top, errp])
    return summary


# -- sweeps ---------------------------------------------------------------------

def _sweep_row(args):
    idx, cfg, assignment = args
    row = {"id": idx, **assignment}
    try:
        sc = scenario_from_config(cfg)
    except InfeasibleForce as exc:
        row.update(status="infeasible", note=str(exc))
        return row
    except ConfigError as exc:
        row.update(status="invalid", note=str(exc))
        return row
    tr = run(sc)
    rep = run_report(sc, tr)
    refs_T = sc.terminal_refs()
    row.update(
        status=tr.status,
        final_position_error=rep.get("final_position_error"),
        final_state_error=rep.get("final_state_error"),
        robot_altitude=rep.get("robot_altitude"),
        max_V_increment=rep.get("max_V_increment"),
        convergence_time=convergence_time(tr, refs_T) if tr.ok else None,
        **{f"margin_{p}": rep["passivity"][p]["margin"] for p in analysis.PORTS if "passivity" in rep},
        note="",
    )
    return row


def sweep(cfg: dict, grid: list[tuple[str, list]], jobs: int | None = None) -> list[dict]:
    """Run the cartesian grid of parameter values; rows come back ordered by scenario id."""
    import itertools

    names = [g[0] for g in grid]
    tasks = []
    for idx, values in enumerate(itertools.product(*[g[1] for g in grid])):
        c = cfg
        for name, v in zip(names, values):
            c = set_param(c, name, v)
        tasks.append((idx, c, dict(zip(names, values))))
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(tasks) == 1:
        return [_sweep_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        rows = list(ex.map(_sweep_row, tasks))
    return sorted(rows, key=lambda r: r["id"])


SWEEP_COLUMNS = ("status", "final_position_error", "final_state_error", "robot_altitude", "max_V_increment",
                 "convergence_time", "margin_robot", "margin_human", "margin_combined", "note")


def write_sweep_table(rows, names, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *names, *SWEEP_COLUMNS])
        for r in rows:
            vals = []
            for c in ["id", *names, *SWEEP_COLUMNS]:
                v = r.get(c)
                vals.append("" if v is None else (repr(v) if isinstance(v, float) else v))
            w.writerow(vals)

