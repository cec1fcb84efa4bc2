"""Fixed-step RK4 integration of the closed loop, human policies, scenario runs.

``run`` drives a compiled kernel: the controller and the human policy are
re-evaluated at every Runge-Kutta stage, the ground constraint is re-imposed
after each step, and every channel is logged on the uniform time grid.
``step_rk4`` is the same scheme over arbitrary Python callables.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

from . import analysis
from .control import GuidanceRefs, _guidance, point_refs, robot_port_input
from .errors import InfeasibleForce, LiftOff, NonFinite
from .model import _cable_force, _dynamics, _lifts_off, cable_force, state_vector, system_rhs
from .params import P_K, P_KP, P_LBAR, P_SAT, SystemParams, pack
from .path import Maneuver, _maneuver_input, path_eval

CSV_HEADER = ("t,pHx,pHy,pHz,vHx,vHy,vHz,pRx,pRy,pRz,vRx,vRy,vRz,fcx,fcy,fcz,"
              "uAx,uAy,uAz,uHx,uHy,uHz,fg,sstar,mode,V,Vdot").split(",")

STATUS_OK, STATUS_LIFTOFF, STATUS_NONFINITE = 0, 1, 2
_STATUS_NAMES = {STATUS_OK: "ok", STATUS_LIFTOFF: "liftoff", STATUS_NONFINITE: "nonfinite"}


# -- human policies ------------------------------------------------------------

@dataclass(frozen=True)
class Nominal:
    """The human only yields to the cable (no voluntary force)."""


@dataclass(frozen=True)
class StopWindow:
    """Between ``t1`` and ``t2`` the human cancels the horizontal cable pull.

    ``ramp`` (s) blends the force in and out with a half-cosine so that the
    applied force stays continuous in time.
    """

    t1: float
    t2: float
    ramp: float = 0.0


@dataclass(frozen=True)
class LateralPulse:
    t1: float
    t2: float
    force: tuple = (0.0, 0.0, 0.0)
    ramp: float = 0.0


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear force profile; held constant outside the given times."""

    times: tuple
    forces: tuple


HumanPolicy = Union[Nominal, StopWindow, LateralPulse, Schedule]


def _encode_policy(policy: HumanPolicy):
    data = np.zeros(6)
    st = np.zeros(1)
    sf = np.zeros((1, 3))
    if isinstance(policy, Nominal):
        return 0, data, st, sf
    if isinstance(policy, StopWindow):
        data[:3] = policy.t1, policy.t2, policy.ramp
        return 1, data, st, sf
    if isinstance(policy, LateralPulse):
        data[:3] = policy.t1, policy.t2, policy.ramp
        data[3:6] = policy.force
        return 2, data, st, sf
    if isinstance(policy, Schedule):
        st = np.asarray(policy.times, dtype=float)
        sf = np.asarray(policy.forces, dtype=float).reshape(-1, 3)
        if len(st) == 0 or len(st) != len(sf) or np.any(np.diff(st) <= 0):
            raise ValueError("schedule needs strictly increasing times, one force per time")
        return 3, data, st, sf
    raise TypeError(f"unknown policy {policy!r}")


@njit(cache=True)
def _envelope(t, t1, t2, ramp):
    if t < t1 or t >= t2:
        return 0.0
    if ramp <= 0.0:
        return 1.0
    a = min((t - t1) / ramp, (t2 - t) / ramp, 1.0)
    return 0.5 * (1.0 - math.cos(math.pi * a))


@njit(cache=True)
def _policy(kind, data, sched_t, sched_f, t, f_c):
    out = np.zeros(3)
    if kind == 1:
        w = _envelope(t, data[0], data[1], data[2])
        out[0] = -w * f_c[0]
        out[1] = -w * f_c[1]
    elif kind == 2:
        w = _envelope(t, data[0], data[1], data[2])
        for i in range(3):
            out[i] = w * data[3 + i]
    elif kind == 3:
        n = sched_t.shape[0]
        if t <= sched_t[0]:
            out[:] = sched_f[0]
        elif t >= sched_t[n - 1]:
            out[:] = sched_f[n - 1]
        else:
            j = np.searchsorted(sched_t, t, side="right") - 1
            a = (t - sched_t[j]) / (sched_t[j + 1] - sched_t[j])
            for i in range(3):
                out[i] = (1.0 - a) * sched_f[j, i] + a * sched_f[j + 1, i]
    # the hand can push down on the ground but never pull itself up
    if out[2] > 0.0:
        out[2] = 0.0
    return out


def policy_force(policy: HumanPolicy, t: float, state, f_c) -> np.ndarray:
    """Voluntary human force at time ``t`` given the current cable force."""
    kind, data, st, sf = _encode_policy(policy)
    return _policy(kind, data, st, sf, float(t), np.asarray(f_c, dtype=float))


# -- tasks and scenarios ------------------------------------------------------

@dataclass(frozen=True)
class PointRegulation:
    refs: GuidanceRefs


@dataclass(frozen=True)
class PathFollowing:
    maneuver: Maneuver


@dataclass
class Scenario:
    params: SystemParams
    initial: np.ndarray
    task: Union[PointRegulation, PathFollowing]
    policy: HumanPolicy = field(default_factory=Nominal)
    dt: float = 1e-3
    duration: float = 60.0
    seed: int = 0

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.duration >= self.dt:
            raise ValueError("duration must be >= dt")
        if self.initial.shape != (12,) or self.initial[2] != 0.0 or self.initial[5] != 0.0:
            raise ValueError("initial state must be a 12-vector with p_H.z = v_H.z = 0")
        fz = self.params.guidance.fz
        if not 0.0 < fz < self.params.human.weight:
            raise InfeasibleForce(
                f"guidance fz = {fz:.6g} N must satisfy 0 < fz < m_H*g = {self.params.human.weight:.6g} N"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def terminal_refs(self) -> GuidanceRefs:
        if isinstance(self.task, PointRegulation):
            return self.task.refs
        return point_refs(path_eval(self.task.maneuver.path, 1.0), self.params)


def hovering_start(p_H, params: SystemParams, height_fraction: float = 0.9) -> np.ndarray:
    """Human at rest at ``p_H``, robot at rest right above it with a slack cable."""
    p_H = np.asarray(p_H, dtype=float)
    p_R = p_H + np.array([0.0, 0.0, height_fraction * params.cable.rest_length])
    return state_vector(p_H, np.zeros(3), p_R, np.zeros(3))


# -- trajectory ---------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    f_c: np.ndarray
    u_A: Optional[np.ndarray]
    u_H: Optional[np.ndarray]
    f_g: np.ndarray
    s_star: np.ndarray
    mode: np.ndarray
    V: np.ndarray
    Vdot: np.ndarray
    u_A_prime: Optional[np.ndarray] = None
    status: str = "ok"
    abort_time: Optional[float] = None
    task_type: str = "point"

    def __len__(self):
        return len(self.t)

    @property
    def p_H(self):
        return self.x[:, 0:3]

    @property
    def v_H(self):
        return self.x[:, 3:6]

    @property
    def p_R(self):
        return self.x[:, 6:9]

    @property
    def v_R(self):
        return self.x[:, 9:12]

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def write_csv(traj: Trajectory, path) -> None:
    fmt = ",".join(["%.17g"] * 23) + ",%s,%d,%.17g,%.17g\n"
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for i in range(len(traj.t)):
            s = traj.s_star[i]
            row = (traj.t[i], *traj.x[i], *traj.f_c[i], *traj.u_A[i], *traj.u_H[i], traj.f_g[i],
                   "" if math.isnan(s) else "%.17g" % s, int(traj.mode[i]), traj.V[i], traj.Vdot[i])
            fh.write(fmt % row)


def read_csv(path) -> Trajectory:
    """Load a trajectory CSV; absent input channels come back as ``None``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    col = {name: i for i, name in enumerate(header)}
    required = ["t", "pHx", "pHy", "pHz", "vHx", "vHy", "vHz", "pRx", "pRy", "pRz", "vRx", "vRy", "vRz"]
    missing = [c for c in required if c not in col]
    if missing:
        from .errors import MissingLogs

        raise MissingLogs(f"trajectory CSV lacks columns {missing}")

    def block(names, default=None):
        if not all(n in col for n in names):
            return default
        idx = [col[n] for n in names]
        return np.array([[float(r[i]) for i in idx] for r in rows]).reshape(len(rows), len(names))

    def scalar(name, fill=np.nan):
        if name not in col:
            return np.full(len(rows), fill)
        i = col[name]
        return np.array([float(r[i]) if r[i] != "" else np.nan for r in rows])

    x = block(required[1:])
    sstar = scalar("sstar")
    return Trajectory(
        t=block(["t"])[:, 0], x=x,
        f_c=block(["fcx", "fcy", "fcz"]),
        u_A=block(["uAx", "uAy", "uAz"]),
        u_H=block(["uHx", "uHy", "uHz"]),
        f_g=scalar("fg"), s_star=sstar,
        mode=scalar("mode", 0).astype(int), V=scalar("V"), Vdot=scalar("Vdot"),
        task_type="point" if np.all(np.isnan(sstar)) else "path",
    )


# -- integration --------------------------------------------------------------

@njit(cache=True)
def _controller(x, task, p_R_ref, f_ref, coef, knots, start, end, grid_s, grid_p, tol, prof, fz, P):
    if task == 0:
        return _guidance(x[6:9], p_R_ref, f_ref, P[P_KP], P[P_SAT]), np.nan
    return _maneuver_input(x, coef, knots, start, end, grid_s, grid_p, tol, prof, fz,
                           P[P_K], P[P_LBAR], P[P_KP], P[P_SAT])


@njit(cache=True)
def _simulate(x0, dt, n_steps, P, task, p_R_ref, f_ref, coef, knots, start, end, grid_s, grid_p, tol,
              prof, fz, pol_kind, pol, sched_t, sched_f):
    N = n_steps + 1
    X = np.empty((N, 12))
    FC = np.empty((N, 3))
    UA = np.empty((N, 3))
    UH = np.empty((N, 3))
    SS = np.empty(N)
    k = P[P_K]
    lbar = P[P_LBAR]
    status = 0
    abort_t = np.nan
    n_done = 0
    x = x0.copy()
    for n in range(N):
        t = n * dt
        fc = _cable_force(x, k, lbar)
        ua, s = _controller(x, task, p_R_ref, f_ref, coef, knots, start, end, grid_s, grid_p, tol, prof, fz, P)
        uh = _policy(pol_kind, pol, sched_t, sched_f, t, fc)
        if _lifts_off(fc, uh, P):
            status = 1
            abort_t = t
            break
        X[n] = x
        FC[n] = fc
        UA[n] = ua
        UH[n] = uh
        SS[n] = s
        n_done = n + 1
        if n == N - 1:
            break
        k1 = _dynamics(x, fc, ua, uh, P)
        ks = np.empty((3, 12))
        fail = False
        for j in range(3):
            c = 0.5 if j < 2 else 1.0
            prev = k1 if j == 0 else ks[j - 1]
            xs = x + (c * dt) * prev
            ts = t + c * dt
            fcs = _cable_force(xs, k, lbar)
            uas, _ = _controller(xs, task, p_R_ref, f_ref, coef, knots, start, end, grid_s, grid_p, tol,
                                 prof, fz, P)
            uhs = _policy(pol_kind, pol, sched_t, sched_f, ts, fcs)
            if _lifts_off(fcs, uhs, P):
                status = 1
                abort_t = ts
                fail = True
                break
            ks[j] = _dynamics(xs, fcs, uas, uhs, P)
        if fail:
            break
        xn = x + (dt / 6.0) * (k1 + 2.0 * ks[0] + 2.0 * ks[1] + ks[2])
        xn[2] = 0.0
        xn[5] = 0.0
        if not np.all(np.isfinite(xn)):
            status = 2
            abort_t = t + dt
            break
        x = xn
    return X[:n_done], FC[:n_done], UA[:n_done], UH[:n_done], SS[:n_done], status, abort_t


def _task_arrays(task):
    if isinstance(task, PointRegulation):
        dummy3 = np.zeros(3)
        return (0, task.refs.p_R_ref, task.refs.f_c_ref, np.zeros((1, 4, 3)), np.array([0.0, 1.0]),
                dummy3, dummy3, np.zeros(1), np.zeros((1, 3)), 1e-6, np.ones(4), 1.0)
    m = task.maneuver
    z = np.zeros(3)
    return (1, z, z, *m.path.kernel_data, m.profile.as_array(), float(m.fz))


def run(scenario: Scenario) -> Trajectory:
    """Integrate a scenario over its full horizon and log every channel.

    Aborts early (``status`` set, partial log kept) on lift-off or a
    non-finite state.  Identical scenarios give bit-identical trajectories.
    """
    params = scenario.params
    P = pack(params)
    pol_kind, pol, st, sf = _encode_policy(scenario.policy)
    X, FC, UA, UH, SS, status, abort_t = _simulate(
        scenario.initial, float(scenario.dt), scenario.n_steps, P, *_task_arrays(scenario.task),
        pol_kind, pol, st, sf)
    return _assemble(scenario, X, FC, UA, UH, SS, int(status), float(abort_t))


def _assemble(scenario, X, FC, UA, UH, SS, status, abort_t):
    params = scenario.params
    refs_T = scenario.terminal_refs()
    t = np.arange(len(X)) * scenario.dt
    u_Ap = robot_port_input(UA, X[:, 6:9], refs_T, params.guidance)
    mode = (np.linalg.norm(X[:, 6:9] - X[:, 0:3], axis=1) - params.cable.rest_length > 0.0).astype(int)
    return Trajectory(
        t=t, x=X, f_c=FC, u_A=UA, u_H=UH,
        f_g=params.human.weight - FC[:, 2] - UH[:, 2],
        s_star=SS, mode=mode,
        V=analysis.lyapunov_series(X, refs_T, params) if len(X) else np.zeros(0),
        Vdot=analysis.rate_expected_series(X, params, u_Ap, UH) if len(X) else np.zeros(0),
        u_A_prime=u_Ap,
        status=_STATUS_NAMES[status],
        abort_time=None if status == STATUS_OK else abort_t,
        task_type="point" if isinstance(scenario.task, PointRegulation) else "path",
    )


def step_rk4(state, controller: Callable, policy: Callable, params: SystemParams, t: float, dt: float) -> np.ndarray:
    """One classic RK4 step with ``controller(t, x) -> u_A`` and ``policy(t, x, f_c) -> u_H``.

    The ground constraint is re-imposed on the result.  Lift-off at any stage
    raises :class:`LiftOff` carrying the stage time.
    """
    x = np.asarray(state, dtype=float)

    def f(ts, xs):
        f_c = cable_force(xs[6:9], xs[0:3], params.cable)
        u_A = controller(ts, xs)
        u_H = policy(ts, xs, f_c)
        try:
            return system_rhs(xs, u_A, u_H, params)
        except LiftOff as exc:
            raise LiftOff(str(exc), time=ts) from None

    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2)
    k4 = f(t + dt, x + dt * k3)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    xn[2] = 0.0
    xn[5] = 0.0
    if not np.all(np.isfinite(xn)):
        raise NonFinite("state left the finite range", time=t + dt)
    return xn
