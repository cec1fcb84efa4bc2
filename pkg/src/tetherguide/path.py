"""Planar parametric paths, desired-force maneuvers and maneuver regulation.

A path is a natural cubic spline through ground waypoints, parameterized by
normalized chord length ``s`` in [0, 1].  The reference parameter fed to the
guidance law is the closest-point projection of the current human position,
so the reference stays put whenever the human stops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline
from shapely.geometry import LineString

from .control import _guidance, _robot_reference
from .errors import DegenerateTangent, EmptyTrajectory, InsufficientRuns, OutOfRange
from .params import CableParams, GuidanceParams

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
TANGENT_EPS = 1e-9


class ParametricPath:
    """C2 cubic interpolant through planar waypoints (all with z = 0)."""

    def __init__(self, waypoints, samples: int = 512, tol: float = 1e-6, validate: bool = True):
        wp = np.asarray(waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] not in (2, 3):
            raise ValueError("waypoints must be an (n >= 2, 2|3) array")
        if wp.shape[1] == 2:
            wp = np.column_stack([wp, np.zeros(len(wp))])
        if np.any(wp[:, 2] != 0.0):
            raise ValueError("path waypoints must lie on the ground (z = 0)")
        chord = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        if np.any(chord <= 0.0):
            raise ValueError("consecutive waypoints must differ")
        knots = np.concatenate([[0.0], np.cumsum(chord)]) / chord.sum()
        knots[-1] = 1.0
        spline = CubicSpline(knots, wp, bc_type="natural", axis=0)

        self.waypoints = wp
        self.knots = knots
        # (segment, power 3..0, axis)
        self.coef = np.ascontiguousarray(np.transpose(spline.c, (1, 0, 2)))
        self.coef[:, :, 2] = 0.0
        self.start = wp[0].copy()
        self.end = wp[-1].copy()
        self.samples = int(samples)
        self.tol = float(tol)
        self.grid_s = np.linspace(0.0, 1.0, self.samples)
        self.grid_p = np.array([_eval(self.coef, self.knots, self.start, self.end, s) for s in self.grid_s])
        for arr in (self.waypoints, self.knots, self.coef, self.start, self.end, self.grid_s, self.grid_p):
            arr.setflags(write=False)
        if validate:
            self.validate()

    def validate(self, density: int = 2048):
        s = np.linspace(0.0, 1.0, density)
        d = np.array([_deriv(self.coef, self.knots, si) for si in s])
        if np.min(np.linalg.norm(d, axis=1)) < TANGENT_EPS:
            raise DegenerateTangent("path has a vanishing parametric derivative")
        pts = np.array([_eval(self.coef, self.knots, self.start, self.end, si) for si in s])
        if not LineString(pts[:, :2]).is_simple:
            raise ValueError("path self-intersects")

    @property
    def kernel_data(self):
        return self.coef, self.knots, self.start, self.end, self.grid_s, self.grid_p, self.tol

    def __repr__(self):
        return f"ParametricPath({len(self.waypoints)} waypoints, samples={self.samples})"


@dataclass(frozen=True)
class ForceProfile:
    """Trapezoidal intensity of the planar pulling force along the path."""

    f_start: float = 0.5
    f_max: float = 1.5
    ramp_up_end: float = 0.1
    ramp_down_start: float = 0.8

    def __post_init__(self):
        if not (self.f_start > 0 and self.f_max > 0):
            raise ValueError("profile forces must be > 0")
        if not (0.0 <= self.ramp_up_end <= self.ramp_down_start < 1.0):
            raise ValueError("need 0 <= ramp_up_end <= ramp_down_start < 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.f_start, self.f_max, self.ramp_up_end, self.ramp_down_start])

    def __call__(self, s: float) -> float:
        return float(_profile(self.as_array(), float(s)))


@dataclass(frozen=True)
class Maneuver:
    """Desired human path paired with the desired cable force along it."""

    path: ParametricPath
    profile: ForceProfile = ForceProfile()
    fz: float = 1.0

    def __post_init__(self):
        if not self.fz > 0:
            raise ValueError("fz must be > 0")


@dataclass
class PathErrorReport:
    s: np.ndarray
    errors: np.ndarray       # (runs, len(s))
    mean: np.ndarray
    variance: np.ndarray     # 1/(N-1) normalization
    std: np.ndarray

    def to_dict(self):
        return {
            "s": self.s.tolist(), "mean": self.mean.tolist(), "std": self.std.tolist(),
            "variance": self.variance.tolist(),
            "max_abs_mean": float(np.max(np.abs(self.mean))), "max_std": float(np.max(self.std)),
        }


# -- compiled primitives -------------------------------------------------------

@njit(cache=True, inline="always")
def _segment(knots, s):
    lo = 0
    hi = knots.shape[0] - 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if knots[mid] <= s:
            lo = mid
        else:
            hi = mid - 1
    return lo


@njit(cache=True)
def _eval(coef, knots, start, end, s):
    if s <= 0.0:
        return start.copy()
    if s >= 1.0:
        return end.copy()
    i = _segment(knots, s)
    u = s - knots[i]
    c = coef[i]
    out = np.empty(3)
    for a in range(3):
        out[a] = ((c[0, a] * u + c[1, a]) * u + c[2, a]) * u + c[3, a]
    return out


@njit(cache=True)
def _deriv(coef, knots, s):
    i = _segment(knots, s)
    u = s - knots[i]
    c = coef[i]
    out = np.empty(3)
    for a in range(3):
        out[a] = (3.0 * c[0, a] * u + 2.0 * c[1, a]) * u + c[2, a]
    return out


@njit(cache=True, inline="always")
def _dist2(coef, knots, start, end, s, p):
    if s <= 0.0:
        q0, q1, q2 = start[0], start[1], start[2]
    elif s >= 1.0:
        q0, q1, q2 = end[0], end[1], end[2]
    else:
        i = _segment(knots, s)
        u = s - knots[i]
        q0 = ((coef[i, 0, 0] * u + coef[i, 1, 0]) * u + coef[i, 2, 0]) * u + coef[i, 3, 0]
        q1 = ((coef[i, 0, 1] * u + coef[i, 1, 1]) * u + coef[i, 2, 1]) * u + coef[i, 3, 1]
        q2 = ((coef[i, 0, 2] * u + coef[i, 1, 2]) * u + coef[i, 2, 2]) * u + coef[i, 3, 2]
    d0 = q0 - p[0]
    d1 = q1 - p[1]
    d2 = q2 - p[2]
    return d0 * d0 + d1 * d1 + d2 * d2


@njit(cache=True)
def _golden(coef, knots, start, end, p, a, b, tol):
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = _dist2(coef, knots, start, end, c, p)
    fd = _dist2(coef, knots, start, end, d, p)
    while b - a >= tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = _dist2(coef, knots, start, end, c, p)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = _dist2(coef, knots, start, end, d, p)
    return 0.5 * (a + b)


@njit(cache=True)
def _project(coef, knots, start, end, grid_s, grid_p, p, tol):
    n = grid_s.shape[0]
    d = np.empty(n)
    for j in range(n):
        d0 = grid_p[j, 0] - p[0]
        d1 = grid_p[j, 1] - p[1]
        d2 = grid_p[j, 2] - p[2]
        d[j] = d0 * d0 + d1 * d1 + d2 * d2
    best_s = 0.0
    best_d = np.inf
    # refine every coarse local minimum so a nearby branch of the path cannot win by aliasing
    for j in range(n):
        if j > 0 and d[j] > d[j - 1]:
            continue
        if j < n - 1 and d[j] > d[j + 1]:
            continue
        lo = grid_s[max(j - 1, 0)]
        hi = grid_s[min(j + 1, n - 1)]
        s = _golden(coef, knots, start, end, p, lo, hi, tol)
        ds = _dist2(coef, knots, start, end, s, p)
        if lo == 0.0 and d[0] <= ds:
            s, ds = 0.0, d[0]
        if hi == 1.0 and d[n - 1] < ds:
            s, ds = 1.0, d[n - 1]
        if ds < best_d:
            best_s, best_d = s, ds
    return best_s


@njit(cache=True)
def _profile(prof, s):
    f0, fm, ru, rd = prof[0], prof[1], prof[2], prof[3]
    if s >= 1.0:
        return 0.0
    if s < ru:
        return f0 + (fm - f0) * s / ru
    if s <= rd:
        return fm
    return fm * (1.0 - s) / (1.0 - rd)


@njit(cache=True)
def _desired_force(coef, knots, prof, fz, s):
    d = _deriv(coef, knots, s)
    n = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
    f = _profile(prof, s)
    out = np.empty(3)
    out[0] = f * d[0] / n
    out[1] = f * d[1] / n
    out[2] = fz
    return out


@njit(cache=True)
def _maneuver_input(x, coef, knots, start, end, grid_s, grid_p, tol, prof, fz, k, rest, kp, sat):
    s = _project(coef, knots, start, end, grid_s, grid_p, x[0:3], tol)
    p_H_d = _eval(coef, knots, start, end, s)
    f_d = _desired_force(coef, knots, prof, fz, s)
    p_R_d = _robot_reference(p_H_d, f_d, k, rest)
    return _guidance(x[6:9], p_R_d, f_d, kp, sat), s


# -- public API ----------------------------------------------------------------

def _check_s(s):
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise OutOfRange(f"path parameter {s} outside [0, 1]")
    return s


def path_eval(path: ParametricPath, s: float) -> np.ndarray:
    return _eval(path.coef, path.knots, path.start, path.end, _check_s(s))


def path_derivative(path: ParametricPath, s: float) -> np.ndarray:
    return _deriv(path.coef, path.knots, _check_s(s))


def path_tangent(path: ParametricPath, s: float) -> np.ndarray:
    d = path_derivative(path, s)
    n = np.linalg.norm(d)
    if n < TANGENT_EPS:
        raise DegenerateTangent(f"|dp/ds| = {n:.3g} at s = {s}")
    return d / n


def desired_force(maneuver: Maneuver, s: float) -> np.ndarray:
    """Planar pull tangent to the path plus the constant vertical component."""
    s = _check_s(s)
    path_tangent(maneuver.path, s)
    p = maneuver.path
    return _desired_force(p.coef, p.knots, maneuver.profile.as_array(), maneuver.fz, s)


def project(path: ParametricPath, p_H) -> float:
    """Parameter of the path point closest to ``p_H`` (smallest s on ties)."""
    p = np.asarray(p_H, dtype=float)
    return float(_project(path.coef, path.knots, path.start, path.end, path.grid_s, path.grid_p, p, path.tol))


def maneuver_refs(maneuver: Maneuver, s: float, cable: CableParams):
    """Guidance references (human position, cable force, robot position) at parameter ``s``."""
    from .control import GuidanceRefs

    return GuidanceRefs.from_force(path_eval(maneuver.path, s), desired_force(maneuver, s), cable)


def maneuver_controller(state, maneuver: Maneuver, gains: GuidanceParams, cable: CableParams):
    """Guidance input with references taken at the projection of the human onto the path.

    Returns ``(u_A, s_star)``.
    """
    x = np.asarray(state, dtype=float)
    sat = -1.0 if gains.error_saturation is None else gains.error_saturation
    u, s = _maneuver_input(x, *maneuver.path.kernel_data, maneuver.profile.as_array(), maneuver.fz,
                           cable.stiffness, cable.rest_length, gains.kp, sat)
    return u, float(s)


def path_frames(path: ParametricPath, s_grid):
    """Points, unit tangents and left normals (z x tangent) on ``s_grid``."""
    pts = np.array([path_eval(path, s) for s in s_grid])
    tan = np.array([path_tangent(path, s) for s in s_grid])
    nrm = np.column_stack([-tan[:, 1], tan[:, 0], np.zeros(len(tan))])
    return pts, tan, nrm


def path_error_curve(positions, path: ParametricPath, s_grid) -> np.ndarray:
    """Signed normal deviation of a trajectory from the path at each ``s`` of ``s_grid``.

    For every path point the trajectory samples lying (within half the mean
    sample spacing) on the normal line are candidates; the candidate nearest
    to the path point gives the error.  Positive means left of the direction
    of travel.
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(P) == 0:
        raise EmptyTrajectory("no trajectory samples")
    spacing = float(np.mean(np.linalg.norm(np.diff(P, axis=0), axis=1))) if len(P) > 1 else 0.0
    pts, tan, nrm = path_frames(path, np.atleast_1d(np.asarray(s_grid, dtype=float)))
    out = np.empty(len(pts))
    for j in range(len(pts)):
        rel = P - pts[j]
        along = rel @ tan[j]
        across = rel @ nrm[j]
        cand = np.flatnonzero(np.abs(along) < 0.5 * spacing)
        if len(cand) == 0:
            i = int(np.argmin(np.abs(along)))
        else:
            i = int(cand[np.argmin(along[cand] ** 2 + across[cand] ** 2)])
        out[j] = across[i]
    return out


def path_error(positions, path: ParametricPath, s: float) -> float:
    return float(path_error_curve(positions, path, [_check_s(s)])[0])


def error_stats(curves, s_grid=None) -> PathErrorReport:
    """Across-run mean and dispersion of path-error curves sampled on a common grid."""
    E = np.asarray(curves, dtype=float)
    if E.ndim != 2 or E.shape[0] < 2:
        raise InsufficientRuns("need at least two runs for error statistics")
    mean = E.mean(axis=0)
    var = ((E - mean) ** 2).sum(axis=0) / (E.shape[0] - 1)
    s = np.linspace(0.0, 1.0, E.shape[1]) if s_grid is None else np.asarray(s_grid, float)
    return PathErrorReport(s=s, errors=E, mean=mean, variance=var, std=np.sqrt(var))
