"""Acceptance suite: ten end-to-end checks with fixed seeds and stated tolerances.

Every check returns a :class:`Result`; ``scale`` multiplies the numerical
tolerances (not the physical thresholds such as convergence distances).
"""
from __future__ import annotations

import filecmp
import functools
import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import analysis, campaign
from .config import builtin_config, scenario_from_config
from .control import GuidanceRefs, guidance_input, point_refs, stop_equilibrium
from .model import state_vector, system_rhs
from .params import GuidanceParams, SystemParams
from .path import (
    ForceProfile, Maneuver, ParametricPath, maneuver_refs, path_error_curve, path_eval, path_frames, project,
)
from .sim import (
    LateralPulse, Nominal, PathFollowing, PointRegulation, Scenario, StopWindow, hovering_start, run, step_rk4,
)

DEFAULTS = SystemParams()
# the path task counts as complete once s* is this close to 1 (approach is asymptotic)
COMPLETION_TOL = 1e-3


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.title}: {self.detail} ({self.elapsed:.1f} s)"


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    check: Callable
    budget: float | None = None      # wall-clock limit in seconds, part of the criterion when set

    def __call__(self, scale: float = 1.0) -> Result:
        t0 = time.perf_counter()
        passed, detail = self.check(scale)
        elapsed = time.perf_counter() - t0
        if self.budget is not None:
            detail += f"; runtime {elapsed:.1f} s vs budget {self.budget:.0f} s"
            passed = passed and elapsed < self.budget
        return Result(self.number, self.title, bool(passed), detail, elapsed)


# -- shared scenarios ----------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _detour_path_run():
    sc = scenario_from_config(builtin_config("detour_path"))
    return sc, run(sc)


@functools.lru_cache(maxsize=None)
def _stop_run():
    sc = scenario_from_config(builtin_config("stop_path"))
    return sc, run(sc)


def _x_e(refs: GuidanceRefs):
    return np.concatenate([refs.p_H_ref, np.zeros(3), refs.p_R_ref, np.zeros(3)])


def _planar(rng, radius):
    r = radius * math.sqrt(rng.uniform())
    a = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([r * math.cos(a), r * math.sin(a), 0.0])


def _ball(rng, radius):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v) * radius * rng.uniform() ** (1.0 / 3.0)


# -- 1 --------------------------------------------------------------------------------

def equilibrium_fidelity(scale):
    rng = np.random.default_rng(101)
    worst_rhs, worst_err, n_bad = 0.0, 0.0, 0
    for _ in range(20):
        fz = rng.uniform(0.5, 5.0)
        params = DEFAULTS.with_(guidance=GuidanceParams(kp=DEFAULTS.guidance.kp, fz=fz))
        refs = point_refs(rng.uniform(-2.0, 2.0, 3) * [1, 1, 0], params)
        x_e = _x_e(refs)
        u_A = guidance_input(refs.p_R_ref, refs, params.guidance)
        worst_rhs = max(worst_rhs, float(np.linalg.norm(system_rhs(x_e, u_A, np.zeros(3), params))))
        x0 = x_e + np.concatenate([_planar(rng, 1.0), _planar(rng, 0.5), _ball(rng, 0.1), _ball(rng, 0.5)])
        tr = run(Scenario(params, x0, PointRegulation(refs), dt=1e-3, duration=60.0))
        err = float(np.linalg.norm(tr.x[-1] - x_e)) if tr.ok else math.inf
        worst_err = max(worst_err, err)
        n_bad += err >= 1e-3
    ok = worst_rhs < 1e-12 * scale and n_bad == 0
    return ok, (f"max |rhs(x_e)| = {worst_rhs:.2e}; max |x(60)-x_e| = {worst_err:.3e} m "
                f"({n_bad}/20 runs above 1e-3)")


# -- 2 --------------------------------------------------------------------------------

def lyapunov_decrease(scale):
    rng = np.random.default_rng(202)
    params = DEFAULTS
    worst_inc, worst_rate, n_rate, fails = -math.inf, 0.0, 0, 0
    for i in range(50):
        refs = point_refs(rng.uniform(-1.0, 1.0, 3) * [1, 1, 0], params)
        p_H = refs.p_H_ref + _planar(rng, 1.0)
        v_H = _planar(rng, 0.5)
        if i % 2 == 0:
            # slack start: robot inside the rest-length sphere around the human
            p_R = p_H + np.array([*_planar(rng, 0.3)[:2], rng.uniform(0.4, 0.9)])
        else:
            p_R = refs.p_R_ref + _ball(rng, 0.2)
        x0 = state_vector(p_H, v_H, p_R, _ball(rng, 0.5))
        tr = run(Scenario(params, x0, PointRegulation(refs), dt=1e-3, duration=20.0))
        mono = analysis.check_monotone(tr, refs, params, tolerance=1e-6 * scale)
        rate = analysis.check_rate(tr, refs, params, rel_tol=1e-3 * scale, abs_tol=1e-6 * scale)
        worst_inc = max(worst_inc, mono.max_increment)
        worst_rate = max(worst_rate, rate.max_abs_error)
        n_rate += rate.n_checked
        fails += (not tr.ok) + (not mono.passed) + (not rate.passed)
    return fails == 0, (f"max per-step dV = {worst_inc:.2e} J (limit {1e-6 * scale * 1e-3:.0e}); "
                        f"max |dV/dt - predicted| = {worst_rate:.2e} W over {n_rate} taut samples; {fails} failures")


# -- 3 --------------------------------------------------------------------------------

def _random_path(rng):
    n = rng.integers(3, 5)
    xs = np.sort(rng.uniform(-1.5, 1.5, n))
    xs[0], xs[-1] = -1.5, 1.5
    pts = np.column_stack([xs, rng.uniform(-0.6, 0.6, n), np.zeros(n)])
    return ParametricPath(pts)


def _random_pulse(rng, t_lo, t_hi):
    """Ramped lateral push (at most 3 N) or ramped stop, chosen at random."""
    t1 = rng.uniform(t_lo, t_hi)
    width = rng.uniform(1.0, 4.0)
    ramp = min(0.5, width / 2)
    if rng.uniform() < 0.5:
        return StopWindow(t1, t1 + width, ramp=ramp)
    return LateralPulse(t1, t1 + width, tuple(_planar(rng, 3.0)), ramp=ramp)


def passivity_campaigns(scale, n=100):
    """Three campaign kinds in rotation: maneuver alone, point regulation with a
    human pulse, maneuver with a human pulse.  Every run starts from the hovering
    template (slack cable, robot above the handle)."""
    rng = np.random.default_rng(303)
    params = DEFAULTS
    worst = {p: math.inf for p in analysis.PORTS}
    counts = {p: 0 for p in analysis.PORTS}
    fails = []
    for i in range(n):
        kind = i % 3
        if kind == 1:
            refs = point_refs(_planar(rng, 1.0), params)
            task = PointRegulation(refs)
            x0 = hovering_start(refs.p_H_ref + _planar(rng, 0.5), params)
        else:
            prof = ForceProfile(f_start=rng.uniform(0.3, 0.8), f_max=rng.uniform(0.8, 1.5))
            m = Maneuver(_random_path(rng), prof, params.guidance.fz)
            task = PathFollowing(m)
            x0 = hovering_start(m.path.start, params)
        policy = Nominal() if kind == 0 else _random_pulse(rng, 3.0, 12.0)
        sc = Scenario(params, x0, task, policy, dt=1e-3, duration=20.0)
        tr = run(sc)
        if not tr.ok:
            fails.append(f"#{i} {tr.status}")
            continue
        for port in campaign.applicable_ports(tr):
            rep = analysis.passivity_report(tr, port, sc.terminal_refs(), params, tolerance=1e-6 * scale)
            worst[port] = min(worst[port], rep.margin)
            counts[port] += 1
            if not rep.passed:
                fails.append(f"#{i} {port} margin {rep.margin:.2e}")
    detail = ", ".join(f"{p}: min margin {worst[p]:.2e} J over {counts[p]} runs" for p in analysis.PORTS)
    if fails:
        detail += "; failures: " + ", ".join(fails[:5])
    return not fails, detail


# -- 4 --------------------------------------------------------------------------------

def slack_phase(scale):
    params = DEFAULTS
    refs = point_refs([0.0, 0.0, 0.0], params)
    x0 = state_vector([0, 0, 0], [0.3, -0.2, 0.0], [0.0, 0.0, 0.05], [0, 0, 0])
    tr = run(Scenario(params, x0, PointRegulation(refs), dt=1e-3, duration=2.0))
    lim = analysis.slack_phase_limits(params)
    if not tr.ok or np.any(tr.mode != 0):
        return False, "cable became taut or run aborted during the slack window"
    climb = float(tr.v_R[-1, 2])
    climb_err = abs(climb - lim.climb_velocity) / lim.climb_velocity
    speed = np.linalg.norm(tr.v_H, axis=1)
    slope = np.polyfit(tr.t, np.log(speed), 1)[0]
    tau = -1.0 / slope
    tau_ref = params.human.mass / (np.sum(params.human.damping) / 3.0)
    tau_err = abs(tau - tau_ref) / tau_ref
    ok = climb_err < 0.01 * scale and tau_err < 0.02 * scale
    return ok, (f"climb {climb:.5f} m/s vs {lim.climb_velocity:.5f} ({100 * climb_err:.3f}%); "
                f"tau {tau:.5f} s vs {tau_ref:.5f} ({100 * tau_err:.3f}%)")


# -- 5, 6 -----------------------------------------------------------------------------

def _stop_window(sc):
    pol = sc.policy
    return pol.t2 - 5.0, pol.t2


def stop_robustness(scale):
    sc, tr = _stop_run()
    if not tr.ok:
        return False, f"run aborted ({tr.status})"
    a, b = _stop_window(sc)
    w = (tr.t >= a) & (tr.t < b)
    vmax = float(np.max(np.linalg.norm(tr.v_H[w], axis=1)))
    i = int(np.flatnonzero(w)[-1])
    refs = maneuver_refs(sc.task.maneuver, tr.s_star[i], sc.params.cable)
    p_eq = stop_equilibrium(tr.p_H[i], refs, sc.params.guidance, sc.params.cable, sc.params.human)
    gap = float(np.linalg.norm(tr.p_R[i] - p_eq))
    s_end = float(tr.s_star[-1])
    ok = vmax < 1e-4 and gap < 1e-3 and s_end >= 1.0 - COMPLETION_TOL
    return ok, (f"max |v_H| on [{a:g}, {b:g}) s = {vmax:.2e} m/s; robot to stop equilibrium {gap:.2e} m; "
                f"final s* = {s_end:.6f}")


def anti_windup(scale):
    sc, tr = _stop_run()
    if not tr.ok:
        return False, f"run aborted ({tr.status})"
    a, b = _stop_window(sc)
    idx = np.flatnonzero((tr.t >= a) & (tr.t < b))
    i0, _i1 = idx[0], idx[-1]
    drift = float(np.ptp(tr.s_star[idx]))
    path = sc.task.maneuver.path
    e0 = np.linalg.norm(path_eval(path, tr.s_star[i0]) - tr.p_H[i0])
    e = np.array([np.linalg.norm(path_eval(path, tr.s_star[i]) - tr.p_H[i]) for i in idx[::50]])
    growth = float(np.max(e) - e0)
    ok = drift < 1e-3 and growth <= 1e-3
    return ok, f"s* drift over the 5 s stop = {drift:.2e}; error growth = {growth:.2e} m (start {e0:.4f} m)"


# -- 7 --------------------------------------------------------------------------------

def path_quality(scale):
    res = campaign.follow_campaign(builtin_config("detour_path"), 8, randomize=True)
    if not all(t.ok for t in res.trajectories):
        return False, "a run aborted"
    mean_abs = np.mean(np.abs(res.curves), axis=0)
    mx = float(np.max(np.abs(res.curves)))
    ok = float(mean_abs.max()) < 0.10 and mx < 0.30
    return ok, (f"max_s mean|e| = {100 * mean_abs.max():.2f} cm (< 10), max |e| = {100 * mx:.2f} cm (< 30); "
                f"max std = {100 * res.stats.std.max():.2f} cm")


# -- 8 --------------------------------------------------------------------------------

def _literal_path_error(P, path, s_grid):
    """Normal offset where the trajectory crosses each normal line, interpolated between samples."""
    pts, tan, nrm = path_frames(path, s_grid)
    out = np.empty(len(s_grid))
    for j in range(len(s_grid)):
        rel = P - pts[j]
        along = rel @ tan[j]
        across = rel @ nrm[j]
        sgn = np.sign(along)
        cross = np.flatnonzero(sgn[:-1] * sgn[1:] <= 0)
        if len(cross) == 0:
            i = int(np.argmin(np.abs(along)))
            out[j] = across[i]
            continue
        best = math.inf
        for i in cross:
            da = along[i + 1] - along[i]
            a = 0.0 if da == 0 else -along[i] / da
            c = across[i] + a * (across[i + 1] - across[i])
            if abs(c) < abs(best):
                best = c
        out[j] = best
    return out


def projection_oracle(scale):
    rng = np.random.default_rng(808)
    dense = np.linspace(0.0, 1.0, 1_000_000)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(4, 7))
        xs = np.cumsum(rng.uniform(0.4, 1.0, n))
        ys = rng.uniform(-0.8, 0.8, n)
        path = ParametricPath(np.column_stack([xs, ys, np.zeros(n)]))
        ref = CubicSpline(path.knots, path.waypoints, bc_type="natural")
        curve = ref(dense)
        for _ in range(5):
            p = ref(rng.uniform()) + _planar(rng, 0.5)
            d2 = np.sum((curve - p) ** 2, axis=1)
            s_brute = dense[int(np.argmin(d2))]
            worst = max(worst, abs(project(path, p) - s_brute))
    sc, tr = _detour_path_run()
    path = sc.task.maneuver.path
    P = tr.p_H[::10]
    grid = np.linspace(0.0, 1.0, 101)
    diff = np.abs(path_error_curve(P, path, grid) - _literal_path_error(P, path, grid))
    spacing = float(np.max(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    ok = worst <= 2e-6 * scale and float(diff.max()) <= spacing
    return ok, (f"max |s - s_brute| = {worst:.2e} (<= 2e-6); max path-error gap {diff.max():.2e} m "
                f"vs sample spacing {spacing:.2e} m")


# -- 9 --------------------------------------------------------------------------------

def integrator_order(scale):
    # a firm vertical pull (20 N, 20 cm stretch) keeps the cable taut under the perturbation
    params = DEFAULTS.with_(guidance=GuidanceParams(kp=DEFAULTS.guidance.kp, fz=20.0))
    refs = point_refs([0.0, 0.0, 0.0], params)
    x0 = state_vector([0.3, -0.2, 0.0], [0.1, 0.2, 0.0], refs.p_R_ref + [0.05, 0.02, 0.03], [0.2, -0.1, 0.1])

    def controller(t, x):
        return guidance_input(x[6:9], refs, params.guidance)

    def policy(t, x, f_c):
        return np.zeros(3)

    T, ends, taut = 1.0, [], True
    for h in (0.02, 0.01, 0.005):
        x = x0.copy()
        for n in range(int(round(T / h))):
            x = step_rk4(x, controller, policy, params, n * h, h)
            taut &= bool(np.linalg.norm(x[6:9] - x[0:3]) > params.cable.rest_length)
        ends.append(x)
    order = math.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    ok = taut and 3.7 <= order <= 4.3
    return ok, f"Richardson order {order:.3f} on a taut segment (cable taut throughout: {taut})"


# -- 10 -------------------------------------------------------------------------------

def determinism(scale):
    from .cli import main

    cfg = builtin_config("detour_path")
    cfg["sim"]["duration"] = 20.0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg_path = tmp / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        codes = [main(["follow", str(cfg_path), "--runs", "2", "--randomize-human", "--no-svg",
                       "--out", str(tmp / d)]) for d in ("a", "b")]
        names = sorted(p.name for p in (tmp / "a").glob("*.csv"))
        same = [filecmp.cmp(tmp / "a" / n, tmp / "b" / n, shallow=False) for n in names]
    ok = codes == [0, 0] and len(names) >= 3 and all(same)
    return ok, f"{sum(same)}/{len(names)} CSV files byte-identical; exit codes {codes}"


CRITERIA = (
    Criterion(1, "equilibrium fidelity", equilibrium_fidelity, budget=30.0),
    Criterion(2, "Lyapunov decrease", lyapunov_decrease),
    Criterion(3, "passivity margins", passivity_campaigns, budget=300.0),
    Criterion(4, "slack-phase limits", slack_phase),
    Criterion(5, "stop robustness", stop_robustness),
    Criterion(6, "maneuver-regulation anti-windup", anti_windup),
    Criterion(7, "path-following quality", path_quality),
    Criterion(8, "projection oracle", projection_oracle),
    Criterion(9, "integrator order", integrator_order),
    Criterion(10, "determinism", determinism),
)


def run_all(criteria=CRITERIA, scale: float = 1.0) -> list[Result]:
    return [c(scale) for c in criteria]

