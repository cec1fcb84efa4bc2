"""Parameter records for the human, cable, admittance filter and guidance law.

Every record is immutable.  Diagonal matrices are stored as 3-tuples of their
diagonal entries; ``pack`` flattens a full :class:`SystemParams` into the
float vector consumed by the compiled kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

# Layout of the packed parameter vector used by the numba kernels.
P_MH, P_BH, P_G, P_K, P_LBAR, P_MA, P_BA, P_KP, P_FZ, P_SAT = 0, 1, 4, 5, 6, 7, 10, 13, 14, 15
P_SIZE = 16


def _diag3(value, name):
    if np.isscalar(value):
        value = (value, value, value)
    out = tuple(float(v) for v in value)
    if len(out) != 3:
        raise ValueError(f"{name} needs 3 diagonal entries, got {len(out)}")
    if not all(v > 0 and math.isfinite(v) for v in out):
        raise ValueError(f"{name} entries must be positive and finite: {out}")
    return out


@dataclass(frozen=True)
class HumanParams:
    """Apparent mass/damping of the guided human (mass-damper, no spring)."""

    mass: float = 10.0
    damping: tuple = (20.0, 20.0, 20.0)
    gravity: float = 9.81

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("human mass must be > 0")
        if not self.gravity > 0:
            raise ValueError("gravity must be > 0")
        object.__setattr__(self, "damping", _diag3(self.damping, "human damping"))

    @property
    def weight(self) -> float:
        return self.mass * self.gravity

    @property
    def B(self) -> np.ndarray:
        return np.array(self.damping)


@dataclass(frozen=True)
class CableParams:
    """Unilateral linear spring.  ``stiffness`` in N/m, ``rest_length`` in m."""

    stiffness: float = 100.0
    rest_length: float = 1.0

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("cable stiffness must be > 0")
        if not self.rest_length > 0:
            raise ValueError("cable rest length must be > 0")


@dataclass(frozen=True)
class AdmittanceParams:
    """Virtual inertia and damping rendered by the robot."""

    inertia: tuple = (0.8, 0.8, 0.8)
    damping: tuple = (2.4, 2.4, 2.4)

    def __post_init__(self):
        object.__setattr__(self, "inertia", _diag3(self.inertia, "admittance inertia"))
        object.__setattr__(self, "damping", _diag3(self.damping, "admittance damping"))

    @property
    def M(self) -> np.ndarray:
        return np.array(self.inertia)

    @property
    def B(self) -> np.ndarray:
        return np.array(self.damping)


@dataclass(frozen=True)
class GuidanceParams:
    """Horizontal proportional gain, vertical force set-point, optional error bound."""

    kp: float = 4.5
    fz: float = 1.0
    error_saturation: Optional[float] = None

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError("kp must be > 0")
        if self.error_saturation is not None and not self.error_saturation > 0:
            raise ValueError("error_saturation must be > 0 when set")

    @property
    def K(self) -> np.ndarray:
        """Diagonal of the gain matrix; the vertical row is zero."""
        return np.array([self.kp, self.kp, 0.0])


@dataclass(frozen=True)
class SystemParams:
    human: HumanParams = field(default_factory=HumanParams)
    cable: CableParams = field(default_factory=CableParams)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    guidance: GuidanceParams = field(default_factory=GuidanceParams)

    def with_(self, **sections) -> "SystemParams":
        return replace(self, **sections)


def pack(params: SystemParams) -> np.ndarray:
    P = np.zeros(P_SIZE)
    h, c, a, g = params.human, params.cable, params.admittance, params.guidance
    P[P_MH] = h.mass
    P[P_BH:P_BH + 3] = h.damping
    P[P_G] = h.gravity
    P[P_K] = c.stiffness
    P[P_LBAR] = c.rest_length
    P[P_MA:P_MA + 3] = a.inertia
    P[P_BA:P_BA + 3] = a.damping
    P[P_KP] = g.kp
    P[P_FZ] = g.fz
    P[P_SAT] = -1.0 if g.error_saturation is None else g.error_saturation
    return P
