"""JSON scenario configuration: schema, defaults and conversion to a Scenario."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .control import point_refs
from .errors import ConfigError, InfeasibleForce
from .params import AdmittanceParams, CableParams, GuidanceParams, HumanParams, SystemParams
from .path import ForceProfile, Maneuver, ParametricPath
from .sim import (
    LateralPulse, Nominal, PathFollowing, PointRegulation, Scenario, Schedule, StopWindow,
    hovering_start,
)
from .model import state_vector

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_pos3 = {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "human": _obj({"mass": _pos, "damping": _pos3, "gravity": _pos}),
    "cable": _obj({"stiffness": _pos, "rest_length": _pos}),
    "admittance": _obj({"inertia": _pos3, "damping": _pos3}),
    "guidance": _obj({"kp": _pos, "fz": _num, "error_saturation": {"type": ["number", "null"], "exclusiveMinimum": 0}}),
    "task": {
        "oneOf": [
            _obj({"type": {"const": "point"}, "target": _vec3}, required=["type", "target"]),
            _obj({
                "type": {"const": "path"},
                "waypoints": {"type": "array", "items": _vec3, "minItems": 2},
                "profile": _obj({"f_start": _pos, "f_max": _pos, "ramp_up_end": _num, "ramp_down_start": _num}),
                "samples": {"type": "integer", "minimum": 3},
            }, required=["type", "waypoints"]),
        ]
    },
    "policy": {
        "oneOf": [
            _obj({"type": {"const": "nominal"}, "params": _obj({})}, required=["type"]),
            _obj({"type": {"const": "stop"},
                  "params": _obj({"t1": _num, "t2": _num, "ramp": _num}, required=["t1", "t2"])},
                 required=["type", "params"]),
            _obj({"type": {"const": "pulse"},
                  "params": _obj({"t1": _num, "t2": _num, "force": _vec3, "ramp": _num},
                                 required=["t1", "t2", "force"])},
                 required=["type", "params"]),
            _obj({"type": {"const": "schedule"},
                  "params": _obj({"points": {"type": "array", "minItems": 1,
                                             "items": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}}},
                                 required=["points"])},
                 required=["type", "params"]),
        ]
    },
    "sim": _obj({"dt": _pos, "duration": _pos, "seed": {"type": "integer", "minimum": 0}}),
    "initial": _obj({"p_H": _vec3, "v_H": _vec3, "p_R": _vec3, "v_R": _vec3}),
}, required=["task"])


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def params_from_config(cfg: dict) -> SystemParams:
    try:
        return SystemParams(
            human=HumanParams(**cfg.get("human", {})),
            cable=CableParams(**cfg.get("cable", {})),
            admittance=AdmittanceParams(**cfg.get("admittance", {})),
            guidance=GuidanceParams(**cfg.get("guidance", {})),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def task_from_config(cfg: dict, params: SystemParams):
    task = cfg["task"]
    try:
        if task["type"] == "point":
            return PointRegulation(point_refs(task["target"], params))
        path = ParametricPath(task["waypoints"], samples=task.get("samples", 512))
        return PathFollowing(Maneuver(path, ForceProfile(**task.get("profile", {})), params.guidance.fz))
    except InfeasibleForce:
        raise
    except ValueError as exc:
        raise ConfigError(f"task: {exc}") from None


def policy_from_config(cfg: dict):
    pol = cfg.get("policy", {"type": "nominal"})
    kind, p = pol["type"], pol.get("params", {})
    if kind == "nominal":
        return Nominal()
    if kind == "stop":
        return StopWindow(p["t1"], p["t2"], p.get("ramp", 0.0))
    if kind == "pulse":
        return LateralPulse(p["t1"], p["t2"], tuple(p["force"]), p.get("ramp", 0.0))
    pts = np.asarray(p["points"], dtype=float)
    return Schedule(tuple(pts[:, 0]), tuple(map(tuple, pts[:, 1:])))


def scenario_from_config(cfg: dict, params: SystemParams | None = None) -> Scenario:
    """Build a Scenario; ``params`` overrides the parameter sections when given."""
    validate_config(cfg)
    params = params_from_config(cfg) if params is None else params
    if not 0.0 < params.guidance.fz < params.human.weight:
        raise InfeasibleForce(
            f"guidance.fz = {params.guidance.fz:.6g} N is infeasible: the regulation equilibrium "
            f"needs 0 < fz < m_H*g = {params.human.weight:.6g} N"
        )
    task = task_from_config(cfg, params)
    init = cfg.get("initial")
    if init is None:
        start = task.maneuver.path.start if isinstance(task, PathFollowing) else np.zeros(3)
        x0 = hovering_start(start, params)
    else:
        try:
            x0 = state_vector(init.get("p_H", [0, 0, 0]), init.get("v_H", [0, 0, 0]),
                              init["p_R"], init.get("v_R", [0, 0, 0]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"initial: {exc}") from None
    sim = cfg.get("sim", {})
    try:
        return Scenario(params, x0, task, policy_from_config(cfg), dt=sim.get("dt", 1e-3),
                        duration=sim.get("duration", 60.0), seed=sim.get("seed", 0))
    except InfeasibleForce:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def schema_has(dotted: str) -> bool:
    node = SCHEMA
    for part in dotted.split("."):
        props = node.get("properties")
        if props is None or part not in props:
            return False
        node = props[part]
    return "properties" not in node


def set_param(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with the parameter at ``dotted`` replaced (scalars broadcast to 3-vectors)."""
    if not schema_has(dotted):
        raise ConfigError(f"unknown parameter {dotted!r}")
    node = SCHEMA
    for part in dotted.split("."):
        node = node["properties"][part]
    if node.get("type") == "array" and np.isscalar(value):
        value = [float(value)] * 3
    out = copy.deepcopy(cfg)
    d = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        d = d.setdefault(part, {})
    d[parts[-1]] = value
    return out


def builtin_config(name: str) -> dict:
    """Load one of the configurations shipped with the package."""
    path = Path(__file__).parent / "configs" / f"{name}.json"
    return load_config(path)


def builtin_config_path(name: str) -> Path:
    return Path(__file__).parent / "configs" / f"{name}.json"
