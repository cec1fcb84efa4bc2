"""Numerical checks of the closed loop: storage function, decrease, passivity.

The storage function is

    V = 1/2 (m_H |v_H|^2 + v_R' M_A v_R + e_R' K e_R)
        + E_cable(|l_c|) - l_c' f_c_ref + V0

with ``E_cable`` the elastic energy stored above the rest length and ``V0``
chosen so that V vanishes at the regulation equilibrium.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .control import GuidanceRefs, robot_port_input
from .errors import InfeasibleForce, MissingLogs
from .model import state_vector, system_rhs
from .params import SystemParams

PORTS = ("robot", "human", "combined")


@dataclass(frozen=True)
class StorageBreakdown:
    V1: float
    V2: float
    V0: float
    V: float


@dataclass
class MonotoneReport:
    max_increment: float
    threshold: float
    worst_index: int
    passed: bool


@dataclass
class RateReport:
    max_abs_error: float
    max_rel_error: float
    n_checked: int
    passed: bool


@dataclass
class PassivityReport:
    port: str
    supply_integral: float
    storage_delta: float
    dissipation_integral: float
    margin: float
    tolerance: float
    passed: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SlackLimits:
    climb_velocity: float
    human_decay_rate: np.ndarray
    human_time_constant: np.ndarray
    human_half_life: np.ndarray


def _v1_v2(X, refs: GuidanceRefs, params: SystemParams):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h, a, c = params.human, params.admittance, params.cable
    K = params.guidance.K
    v_H, p_R, v_R = X[:, 3:6], X[:, 6:9], X[:, 9:12]
    e_R = refs.p_R_ref - p_R
    V1 = 0.5 * (h.mass * np.sum(v_H * v_H, axis=1) + np.sum(a.M * v_R * v_R, axis=1)
                + np.sum(K * e_R * e_R, axis=1))
    l_c = p_R - X[:, 0:3]
    stretch = np.linalg.norm(l_c, axis=1) - c.rest_length
    elastic = np.where(stretch > 0.0, 0.5 * c.stiffness * stretch * stretch, 0.0)
    V2 = elastic - l_c @ refs.f_c_ref
    return V1, V2


def storage_offset(refs: GuidanceRefs, params: SystemParams) -> float:
    """Constant making V vanish at the equilibrium of ``refs``."""
    x_e = np.concatenate([refs.p_H_ref, np.zeros(3), refs.p_R_ref, np.zeros(3)])
    V1, V2 = _v1_v2(x_e, refs, params)
    return -float(V1[0] + V2[0])


def lyapunov(state, refs: GuidanceRefs, params: SystemParams) -> StorageBreakdown:
    V1, V2 = _v1_v2(state, refs, params)
    V0 = storage_offset(refs, params)
    V1, V2 = float(V1[0]), float(V2[0])
    return StorageBreakdown(V1, V2, V0, V1 + V2 + V0)


def lyapunov_series(X, refs: GuidanceRefs, params: SystemParams) -> np.ndarray:
    V1, V2 = _v1_v2(X, refs, params)
    return V1 + V2 + storage_offset(refs, params)


def lyapunov_rate_expected(state, params: SystemParams) -> float:
    """Storage rate of the unforced regulation loop: minus the damping power."""
    x = np.asarray(state, dtype=float)
    v_H, v_R = x[3:6], x[9:12]
    return float(-np.sum(params.human.B * v_H * v_H) - np.sum(params.admittance.B * v_R * v_R))


def rate_expected_series(X, params: SystemParams, u_A_prime=None, u_H=None) -> np.ndarray:
    """Predicted dV/dt along logged samples, including the port supplies when given."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v_H, v_R = X[:, 3:6], X[:, 9:12]
    r = -np.sum(params.human.B * v_H * v_H, axis=1) - np.sum(params.admittance.B * v_R * v_R, axis=1)
    if u_A_prime is not None:
        r = r + np.sum(np.asarray(u_A_prime) * v_R, axis=1)
    if u_H is not None:
        r = r + np.sum(np.asarray(u_H) * v_H, axis=1)
    return r


def equilibrium(refs: GuidanceRefs, params: SystemParams) -> np.ndarray:
    """Zero-velocity equilibrium of the regulation loop for vertical ``refs``."""
    f = refs.f_c_ref
    if f[0] != 0.0 or f[1] != 0.0:
        raise ValueError("a rest equilibrium needs a vertical desired cable force")
    if not 0.0 < f[2] < params.human.weight:
        raise InfeasibleForce(
            f"desired vertical force {f[2]:.6g} N must lie in (0, m_H*g = {params.human.weight:.6g} N)"
        )
    return state_vector(refs.p_H_ref, np.zeros(3), refs.p_R_ref, np.zeros(3))


def equilibrium_residual(refs: GuidanceRefs, params: SystemParams) -> float:
    from .control import guidance_input

    x_e = equilibrium(refs, params)
    u_A = guidance_input(x_e[6:9], refs, params.guidance)
    return float(np.linalg.norm(system_rhs(x_e, u_A, np.zeros(3), params)))


def slack_phase_limits(params: SystemParams) -> SlackLimits:
    """Asymptotics while the cable is slack: robot climb speed, human velocity decay."""
    rate = params.human.B / params.human.mass
    return SlackLimits(
        climb_velocity=params.guidance.fz / params.admittance.damping[2],
        human_decay_rate=rate,
        human_time_constant=1.0 / rate,
        human_half_life=math.log(2.0) / rate,
    )


def check_monotone(traj, refs: GuidanceRefs, params: SystemParams, tolerance: float = 1e-6) -> MonotoneReport:
    """Largest per-step increase of V; passes iff every increase is at most ``tolerance*dt``."""
    V = lyapunov_series(traj.x, refs, params)
    dt = float(traj.t[1] - traj.t[0]) if len(traj.t) > 1 else 0.0
    inc = np.diff(V)
    if len(inc) == 0:
        return MonotoneReport(0.0, tolerance * dt, -1, True)
    i = int(np.argmax(inc))
    return MonotoneReport(float(inc[i]), tolerance * dt, i, bool(inc[i] <= tolerance * dt))


def check_rate(traj, refs: GuidanceRefs, params: SystemParams, rel_tol: float = 1e-3,
               abs_tol: float = 1e-6, guard: int = 2) -> RateReport:
    """Compare a five-point central difference of V with the predicted rate on taut samples.

    Samples within ``guard`` steps of a cable mode change are skipped, since
    the stencil straddles the kink in the cable law there.
    """
    V = lyapunov_series(traj.x, refs, params)
    dt = float(traj.t[1] - traj.t[0])
    u_Ap = robot_port_input(traj.u_A, traj.x[:, 6:9], refs, params.guidance) if traj.u_A is not None else None
    expected = rate_expected_series(traj.x, params, u_Ap, traj.u_H)
    numeric = np.full_like(V, np.nan)
    numeric[2:-2] = (V[:-4] - 8.0 * V[1:-3] + 8.0 * V[3:-1] - V[4:]) / (12.0 * dt)
    ok = np.zeros(len(V), dtype=bool)
    ok[2:-2] = True
    mode = np.asarray(traj.mode)
    ok &= mode == 1
    for i in np.flatnonzero(np.diff(mode) != 0):
        ok[max(i - guard, 0):i + guard + 2] = False
    if not np.any(ok):
        return RateReport(0.0, 0.0, 0, True)
    err = np.abs(numeric[ok] - expected[ok])
    allowed = np.maximum(abs_tol, rel_tol * np.abs(expected[ok]))
    rel = err / np.maximum(np.abs(expected[ok]), 1e-300)
    return RateReport(float(err.max()), float(np.max(np.where(err > abs_tol, rel, 0.0))),
                      int(ok.sum()), bool(np.all(err <= allowed)))


def port_signals(traj, port: str, refs_T: GuidanceRefs, params: SystemParams):
    """Supply power, dissipated power for one port, sampled on the trajectory grid."""
    if port not in PORTS:
        raise ValueError(f"unknown port {port!r}; expected one of {PORTS}")
    v_H, v_R = traj.x[:, 3:6], traj.x[:, 9:12]
    supply = np.zeros(len(traj.t))
    diss = np.zeros(len(traj.t))
    if port in ("robot", "combined"):
        if getattr(traj, "u_A", None) is None:
            raise MissingLogs("robot port needs the u_A channel")
        u_Ap = robot_port_input(traj.u_A, traj.x[:, 6:9], refs_T, params.guidance)
        supply = supply + np.sum(u_Ap * v_R, axis=1)
        diss = diss + np.sum(params.admittance.B * v_R * v_R, axis=1)
    if port in ("human", "combined"):
        if getattr(traj, "u_H", None) is None:
            raise MissingLogs("human port needs the u_H channel")
        supply = supply + np.sum(traj.u_H * v_H, axis=1)
        diss = diss + np.sum(params.human.B * v_H * v_H, axis=1)
    return supply, diss


def passivity_report(traj, port: str, refs_T: GuidanceRefs, params: SystemParams,
                     tolerance: float = 1e-6) -> PassivityReport:
    """Integral dissipation inequality ``V(T) - V(0) <= int u'y - int y'Dy`` for one port."""
    supply, diss = port_signals(traj, port, refs_T, params)
    V = lyapunov_series(traj.x, refs_T, params)
    s_int = float(trapezoid(supply, traj.t))
    d_int = float(trapezoid(diss, traj.t))
    dV = float(V[-1] - V[0])
    margin = s_int - d_int - dV
    return PassivityReport(port, s_int, dV, d_int, margin, tolerance, bool(margin >= -tolerance))
