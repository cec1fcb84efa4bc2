"""Admittance filter, guidance law and the equilibria they induce."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NoConvergence, ZeroForceRef
from .model import _cable_force, _tension
from .params import AdmittanceParams, CableParams, GuidanceParams, HumanParams, SystemParams


@dataclass(frozen=True)
class GuidanceRefs:
    """Human position reference, desired cable force and the implied robot reference."""

    p_H_ref: np.ndarray
    f_c_ref: np.ndarray
    p_R_ref: np.ndarray

    @classmethod
    def from_force(cls, p_H_ref, f_c_ref, cable: CableParams) -> "GuidanceRefs":
        p_H_ref = np.asarray(p_H_ref, dtype=float).copy()
        f_c_ref = np.asarray(f_c_ref, dtype=float).copy()
        return cls(p_H_ref, f_c_ref, robot_reference(p_H_ref, f_c_ref, cable))


def point_refs(p_H_ref, params: SystemParams) -> GuidanceRefs:
    """Regulation references: vertical desired force of intensity ``guidance.fz``."""
    f = np.array([0.0, 0.0, params.guidance.fz])
    return GuidanceRefs.from_force(p_H_ref, f, params.cable)


# -- compiled primitives -------------------------------------------------------

@njit(cache=True)
def _robot_reference(p_H_ref, f_ref, k, rest):
    n = math.sqrt(f_ref[0] ** 2 + f_ref[1] ** 2 + f_ref[2] ** 2)
    c = 1.0 / k + rest / n
    out = np.empty(3)
    for i in range(3):
        out[i] = p_H_ref[i] + f_ref[i] * c
    return out


@njit(cache=True)
def _guidance(p_R, p_R_ref, f_ref, kp, sat):
    ex = p_R_ref[0] - p_R[0]
    ey = p_R_ref[1] - p_R[1]
    if sat > 0.0:
        n = math.sqrt(ex * ex + ey * ey)
        if n > sat:
            ex *= sat / n
            ey *= sat / n
    out = np.empty(3)
    out[0] = kp * ex + f_ref[0]
    out[1] = kp * ey + f_ref[1]
    out[2] = f_ref[2]
    return out


# -- public API ----------------------------------------------------------------

def admittance_input(state, f_c, u_A, adm: AdmittanceParams) -> np.ndarray:
    """Commanded robot acceleration of the virtual mass-damper."""
    v_R = np.asarray(state, dtype=float)[9:12]
    return (-adm.B * v_R - np.asarray(f_c, float) + np.asarray(u_A, float)) / adm.M


def robot_reference(p_H_ref, f_c_ref, cable: CableParams) -> np.ndarray:
    p_H_ref = np.asarray(p_H_ref, dtype=float)
    f_c_ref = np.asarray(f_c_ref, dtype=float)
    if p_H_ref[2] != 0.0:
        raise ValueError("human reference must lie on the ground (z = 0)")
    if not np.linalg.norm(f_c_ref) > 0.0:
        raise ZeroForceRef("desired cable force must be non-zero")
    return _robot_reference(p_H_ref, f_c_ref, cable.stiffness, cable.rest_length)


def guidance_input(p_R, refs: GuidanceRefs, gains: GuidanceParams) -> np.ndarray:
    """Proportional action on the horizontal robot error plus force feedforward."""
    sat = -1.0 if gains.error_saturation is None else gains.error_saturation
    return _guidance(np.asarray(p_R, float), refs.p_R_ref, refs.f_c_ref, gains.kp, sat)


def time_varying_decompose(refs_t: GuidanceRefs, refs_T: GuidanceRefs, gains: GuidanceParams) -> np.ndarray:
    """Part of the guidance input due to the references differing from the final ones."""
    return gains.K * (refs_t.p_R_ref - refs_T.p_R_ref) + (refs_t.f_c_ref - refs_T.f_c_ref)


def robot_port_input(u_A, p_R, refs_T: GuidanceRefs, gains: GuidanceParams) -> np.ndarray:
    """Recover the time-varying input u_A' from logged ``u_A`` and robot positions.

    Works on single vectors or (N, 3) arrays.  Without saturation this equals
    :func:`time_varying_decompose` evaluated on the running references.
    """
    u_A = np.asarray(u_A, dtype=float)
    p_R = np.asarray(p_R, dtype=float)
    return u_A - (gains.K * (refs_T.p_R_ref - p_R) + refs_T.f_c_ref)


def _residual(p_R, p_H, refs, gains, cable):
    x = np.zeros(12)
    x[0:3] = p_H
    x[6:9] = p_R
    f_c = _cable_force(x, cable.stiffness, cable.rest_length)
    return guidance_input(p_R, refs, gains) - f_c


def _cable_jacobian(p_R, p_H, cable):
    l = p_R - p_H
    n = np.linalg.norm(l)
    t = _tension(n, cable.stiffness, cable.rest_length)
    if t <= 0.0:
        return np.zeros((3, 3))
    u = l / n
    uu = np.outer(u, u)
    return cable.stiffness * uu + (t / n) * (np.eye(3) - uu)


def stop_equilibrium(p_H, refs: GuidanceRefs, gains: GuidanceParams, cable: CableParams,
                     human: HumanParams | None = None, tol=1e-10, max_iter=100) -> np.ndarray:
    """Robot rest position when the human holds still at ``p_H`` against the cable.

    Solves ``0 = -f_c(p_R, p_H) + u_A(p_R)`` with damped Newton iterations on the
    full nonlinear cable law.
    """
    p_H = np.asarray(p_H, dtype=float)
    p = p_H + (refs.p_R_ref - refs.p_H_ref)
    r = _residual(p, p_H, refs, gains, cable)
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if nr < tol:
            break
        J = -_cable_jacobian(p, p_H, cable) - np.diag(gains.K)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            # slack cable: only the vertical direction is singular; climb
            step = np.array([0.0, 0.0, cable.rest_length])
        lam = 1.0
        while lam > 1e-8:
            trial = p + lam * step
            rt = _residual(trial, p_H, refs, gains, cable)
            if np.linalg.norm(rt) < nr:
                break
            lam *= 0.5
        p, r = trial, rt
    else:
        raise NoConvergence(f"stop equilibrium residual {np.linalg.norm(r):.3g} N after {max_iter} iterations")
    if np.linalg.norm(r) >= tol:
        raise NoConvergence(f"stop equilibrium residual {np.linalg.norm(r):.3g} N")
    if human is not None and _cable_force(np.r_[p_H, np.zeros(3), p, np.zeros(3)],
                                          cable.stiffness, cable.rest_length)[2] >= human.weight:
        raise NoConvergence("stop equilibrium would lift the human off the ground")
    return p


def stop_equilibrium_linearized(p_H, refs: GuidanceRefs, gains: GuidanceParams, cable: CableParams) -> np.ndarray:
    """First-order estimate of :func:`stop_equilibrium` around the nominal equilibrium.

    Uses the tangent stiffness of the taut cable at the reference configuration,
    ``S = k u u^T + (t/|l|)(I - u u^T)``, so ``(S + K) dp_R = S dp_H``.
    """
    S = _cable_jacobian(refs.p_R_ref, refs.p_H_ref, cable)
    dp_H = np.asarray(p_H, dtype=float) - refs.p_H_ref
    return refs.p_R_ref + np.linalg.solve(S + np.diag(gains.K), S @ dp_H)


def stop_equilibrium_printed(p_H, refs: GuidanceRefs, gains: GuidanceParams, cable: CableParams,
                             sign: float = -1.0) -> np.ndarray:
    """Closed form ``(kI + K)^-1 (k p_H + sign*K p_R_ref + f_c_ref)``.

    The cable is treated as a zero-rest-length spring.  ``sign=-1`` reproduces
    the published expression, ``sign=+1`` the one consistent with the force
    balance.  Kept for comparison against :func:`stop_equilibrium`.
    """
    k = cable.stiffness
    A = np.diag(k + gains.K)
    rhs = k * np.asarray(p_H, float) + sign * gains.K * refs.p_R_ref + refs.f_c_ref
    return np.linalg.solve(A, rhs)
