"""Coupled human / cable / admittance-robot dynamics.

The state is a flat 12-vector ``[p_H, v_H, p_R, v_R]`` (world frame, z up).
The human is constrained to the ground plane: its vertical position and
velocity are identically zero, and the ground reaction absorbs gravity and
every vertical force acting on the hand.
"""
from __future__ import annotations

import math
from enum import IntEnum

import numpy as np
from numba import njit

from .errors import LiftOff
from .params import (
    P_BA, P_BH, P_G, P_K, P_LBAR, P_MA, P_MH,
    CableParams, HumanParams, SystemParams, pack,
)

PH = slice(0, 3)
VH = slice(3, 6)
PR = slice(6, 9)
VR = slice(9, 12)


class CableMode(IntEnum):
    SLACK = 0
    TAUT = 1


def state_vector(p_H, v_H, p_R, v_R) -> np.ndarray:
    """Stack the four blocks into a state, checking the ground constraint."""
    x = np.concatenate([np.asarray(v, dtype=float).reshape(3) for v in (p_H, v_H, p_R, v_R)])
    if x[2] != 0.0 or x[5] != 0.0:
        raise ValueError("human must start on the ground: p_H.z = v_H.z = 0")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    return x


def split_state(x):
    x = np.asarray(x, dtype=float)
    return x[PH], x[VH], x[PR], x[VR]


# -- compiled primitives -------------------------------------------------------

@njit(cache=True)
def _tension(length, k, rest):
    stretch = length - rest
    if stretch > 0.0:
        return k * stretch
    return 0.0


@njit(cache=True)
def _cable_force(x, k, rest):
    """Force exerted by the cable on the human at state ``x``."""
    out = np.zeros(3)
    lx = x[6] - x[0]
    ly = x[7] - x[1]
    lz = x[8] - x[2]
    n = math.sqrt(lx * lx + ly * ly + lz * lz)
    t = _tension(n, k, rest)
    if t > 0.0:
        s = t / n
        out[0] = s * lx
        out[1] = s * ly
        out[2] = s * lz
    return out


@njit(cache=True)
def _dynamics(x, f_c, u_A, u_H, P):
    dx = np.empty(12)
    m = P[P_MH]
    for i in range(3):
        dx[i] = x[3 + i]
        dx[6 + i] = x[9 + i]
        dx[9 + i] = (-P[P_BA + i] * x[9 + i] - f_c[i] + u_A[i]) / P[P_MA + i]
    for i in range(2):
        dx[3 + i] = (-P[P_BH + i] * x[3 + i] + f_c[i] + u_H[i]) / m
    dx[5] = 0.0
    return dx


@njit(cache=True)
def _lifts_off(f_c, u_H, P):
    return f_c[2] + u_H[2] >= P[P_MH] * P[P_G]


# -- public API ----------------------------------------------------------------

def cable_tension(length: float, cable: CableParams) -> float:
    """Tension intensity of the unilateral spring for a given end-to-end distance."""
    return float(_tension(float(length), cable.stiffness, cable.rest_length))


def cable_elastic_energy(length: float, cable: CableParams) -> float:
    """Integral of the tension from the rest length up to ``length``."""
    stretch = float(length) - cable.rest_length
    return 0.5 * cable.stiffness * stretch * stretch if stretch > 0.0 else 0.0


def cable_force(p_R, p_H, cable: CableParams) -> np.ndarray:
    """Cable force acting on the human; the robot feels its negation."""
    x = np.zeros(12)
    x[PH] = p_H
    x[PR] = p_R
    return _cable_force(x, cable.stiffness, cable.rest_length)


def cable_mode(state, cable: CableParams) -> CableMode:
    p_H, _, p_R, _ = split_state(state)
    taut = np.linalg.norm(p_R - p_H) - cable.rest_length > 0.0
    return CableMode.TAUT if taut else CableMode.SLACK


def ground_reaction(f_c, human: HumanParams, u_H=None) -> float:
    """Intensity of the vertical ground reaction keeping the hand on the floor.

    Raises :class:`LiftOff` when the upward load reaches the human's weight.
    """
    fz = float(f_c[2]) + (0.0 if u_H is None else float(u_H[2]))
    if fz >= human.weight:
        raise LiftOff(f"vertical load {fz:.6g} N >= human weight {human.weight:.6g} N")
    return human.weight - fz


def human_accel(state, human: HumanParams, f_c, u_H) -> np.ndarray:
    ground_reaction(f_c, human, u_H)
    _, v_H, _, _ = split_state(state)
    a = (-human.B * v_H + np.asarray(f_c, float) + np.asarray(u_H, float)) / human.mass
    a[2] = 0.0
    return a


def system_rhs(state, u_A, u_H, params: SystemParams) -> np.ndarray:
    """Time derivative of the state under admittance input ``u_A`` and human force ``u_H``."""
    x = np.asarray(state, dtype=float)
    u_A = np.asarray(u_A, dtype=float)
    u_H = np.zeros(3) if u_H is None else np.asarray(u_H, dtype=float)
    P = pack(params)
    f_c = _cable_force(x, P[P_K], P[P_LBAR])
    if _lifts_off(f_c, u_H, P):
        ground_reaction(f_c, params.human, u_H)
    return _dynamics(x, f_c, u_A, u_H, P)
