import math

import numpy as np
import pytest

from tetherguide.control import guidance_input, point_refs
from tetherguide.errors import InfeasibleForce, LiftOff, MissingLogs
from tetherguide.model import state_vector
from tetherguide.params import GuidanceParams
from tetherguide.path import Maneuver
from tetherguide.sim import (
    CSV_HEADER, LateralPulse, Nominal, PathFollowing, PointRegulation, Scenario, Schedule, StopWindow,
    hovering_start, policy_force, read_csv, run, step_rk4, write_csv,
)

from conftest import taut_state


def _zero(t, x, f_c=None):
    return np.zeros(3)


def test_step_rk4_rest_is_fixed_point(params):
    x = hovering_start([0, 0, 0], params)
    np.testing.assert_array_equal(step_rk4(x, _zero, _zero, params, 0.0, 0.01), x)


def test_step_rk4_slack_damped_double_integrator(params):
    # robot under constant input with a slack cable: v(t) = a/b (1 - e^{-bt/m})
    u = np.array([0.3, -0.2, 0.5])
    m, b = params.admittance.inertia[0], params.admittance.damping[0]
    x = state_vector([0, 0, 0], [0, 0, 0], [0, 0, 0.1], [0, 0, 0])
    dt = 0.01
    for n in range(50):
        x = step_rk4(x, lambda t, s: u, _zero, params, n * dt, dt)
    t = 0.5
    lam = b / m
    v = u / b * (1 - math.exp(-lam * t))
    p = np.array([0, 0, 0.1]) + u / b * (t - (1 - math.exp(-lam * t)) / lam)
    np.testing.assert_allclose(x[9:12], v, atol=1e-9)
    np.testing.assert_allclose(x[6:9], p, atol=1e-9)


def test_step_rk4_matches_compiled_run(params):
    refs = point_refs([0.2, 0.1, 0], params)
    x0 = taut_state(refs, dp_H=(0.2, 0, 0), v_R=(0.1, 0.1, 0))
    sc = Scenario(params, x0, PointRegulation(refs), dt=0.01, duration=0.5)
    tr = run(sc)
    x = x0.copy()
    for n in range(50):
        x = step_rk4(x, lambda t, s: guidance_input(s[6:9], refs, params.guidance), _zero, params, n * 0.01, 0.01)
    np.testing.assert_allclose(tr.x[-1], x, rtol=1e-12, atol=1e-13)


def test_step_rk4_order_four(params):
    strong = params.with_(guidance=GuidanceParams(fz=20.0))
    refs = point_refs([0, 0, 0], strong)
    x0 = taut_state(refs, dp_H=(0.1, 0, 0), v_H=(0.1, 0, 0), dp_R=(0.03, 0.01, 0.02))

    def ctl(t, s):
        return guidance_input(s[6:9], refs, strong.guidance)

    ends = []
    for h in (0.04, 0.02, 0.01):
        x = x0.copy()
        for n in range(int(round(0.8 / h))):
            x = step_rk4(x, ctl, _zero, strong, n * h, h)
        ends.append(x)
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert 12.0 < ratio < 20.0


def test_step_rk4_liftoff_carries_time(params):
    x = state_vector([0, 0, 0], [0, 0, 0], [0, 0, 1.97], [0, 0, 5.0])
    with pytest.raises(LiftOff) as exc:
        step_rk4(x, _zero, _zero, params, 1.0, 0.01)
    assert exc.value.time is not None and 1.0 <= exc.value.time <= 1.01


def test_policy_force():
    assert np.all(policy_force(Nominal(), 3.0, None, [1, 2, 3]) == 0)
    np.testing.assert_allclose(policy_force(StopWindow(0, 1), 0.5, None, [1.2, 0.3, 1.0]), [-1.2, -0.3, 0])
    assert np.all(policy_force(StopWindow(0, 1), 1.5, None, [1.2, 0.3, 1.0]) == 0)
    np.testing.assert_allclose(policy_force(Schedule((0.0, 1.0), ((0, 0, 0), (2, 0, 0))), 0.5, None, np.zeros(3)),
                               [1, 0, 0])
    np.testing.assert_allclose(policy_force(LateralPulse(1, 2, (0.5, 0, 3.0)), 1.5, None, np.zeros(3)), [0.5, 0, 0])


def test_ramped_window_is_continuous():
    pol = StopWindow(1.0, 3.0, ramp=0.5)
    ts = np.linspace(0.9, 3.1, 2201)
    f = np.array([policy_force(pol, t, None, [1.0, 0, 0])[0] for t in ts])
    assert np.max(np.abs(np.diff(f))) < 0.01
    assert f[0] == 0 and f[-1] == 0 and f[1100] == -1.0


def test_scenario_validation(params):
    x0 = hovering_start([0, 0, 0], params)
    task = PointRegulation(point_refs([0, 0, 0], params))
    with pytest.raises(ValueError):
        Scenario(params, x0, task, dt=0.0)
    with pytest.raises(ValueError):
        Scenario(params, x0, task, dt=0.01, duration=0.001)
    bad = params.with_(guidance=GuidanceParams(fz=params.human.weight))
    with pytest.raises(InfeasibleForce):
        Scenario(bad, x0, task)


def test_single_step_run(params):
    sc = Scenario(params, hovering_start([0, 0, 0], params), PointRegulation(point_refs([0, 0, 0], params)),
                  dt=0.01, duration=0.01)
    tr = run(sc)
    assert len(tr) == 2 and tr.t[1] == 0.01


def test_run_invariants_and_determinism(params, detour_path):
    sc = Scenario(params, hovering_start(detour_path.start, params), PathFollowing(Maneuver(detour_path)),
                  duration=5.0)
    a, b = run(sc), run(sc)
    for name in ("x", "f_c", "u_A", "u_H", "s_star", "V"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert np.all(a.x[:, 2] == 0) and np.all(a.x[:, 5] == 0)
    np.testing.assert_allclose(np.diff(a.t), 0.001)
    assert np.all(np.isfinite(a.s_star))


def test_point_run_frozen(params):
    # 5 s of the default point task from the hovering start 1 m away from the target
    refs = point_refs([1, 0, 0], params)
    tr = run(Scenario(params, hovering_start([0, 0, 0], params), PointRegulation(refs), duration=5.0))
    expected = [0.19561825054544357, 0.0, 0.0, 0.03913553457604294, 0.0, 0.0, 0.8257031940829607, 0.0,
                0.7921861262667691, 0.012658837120197637, 0.0, 0.020488760464063557]
    np.testing.assert_allclose(tr.x[-1], expected, rtol=1e-9, atol=1e-12)
    assert np.all(np.isnan(tr.s_star))


def test_stop_window_halts_human(params, detour_path):
    sc = Scenario(params, hovering_start(detour_path.start, params), PathFollowing(Maneuver(detour_path)),
                  StopWindow(20.0, 26.0), duration=30.0)
    tr = run(sc)
    w = (tr.t > 24.0) & (tr.t < 26.0)
    assert np.max(np.linalg.norm(tr.v_H[w], axis=1)) < 1e-4
    assert np.ptp(tr.s_star[w]) < 1e-4
    assert tr.s_star[-1] > tr.s_star[w][-1] + 1e-3     # resumes after release


def test_liftoff_aborts_run(params):
    x0 = state_vector([0, 0, 0], [0, 0, 0], [0, 0, 1.5], [0, 0, 15.0])
    tr = run(Scenario(params, x0, PointRegulation(point_refs([0, 0, 0], params)), duration=5.0))
    assert tr.status == "liftoff" and tr.abort_time is not None
    assert len(tr) < 5001


def test_csv_round_trip(tmp_path, params, detour_path):
    sc = Scenario(params, hovering_start(detour_path.start, params), PathFollowing(Maneuver(detour_path)),
                  LateralPulse(0.5, 1.0, (1.0, 0.0, 0.0)), duration=1.5)
    tr = run(sc)
    write_csv(tr, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)
    back = read_csv(tmp_path / "t.csv")
    for name in ("t", "x", "f_c", "u_A", "u_H", "f_g", "s_star", "V", "Vdot"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
    np.testing.assert_array_equal(back.mode, tr.mode)


def test_csv_point_task_has_empty_sstar(tmp_path, params):
    tr = run(Scenario(params, hovering_start([0, 0, 0], params), PointRegulation(point_refs([0, 0, 0], params)),
                      duration=0.01))
    write_csv(tr, tmp_path / "p.csv")
    row = (tmp_path / "p.csv").read_text().splitlines()[1].split(",")
    assert row[CSV_HEADER.index("sstar")] == ""
    assert read_csv(tmp_path / "p.csv").task_type == "point"


def test_csv_missing_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("t,pHx\n0,0\n")
    with pytest.raises(MissingLogs):
        read_csv(tmp_path / "bad.csv")
