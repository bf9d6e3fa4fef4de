"""Scenario configuration: strict TOML schema with nested sections
(body, gains, limits, planner, trajectory, initial, run), bundled presets,
and a serializer for round-trips.

Unknown keys are rejected with their dotted path; units are documented in the
bundled preset files and the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .controller import ActuationLimits, ControlGains
from .dynamics import DEFAULT_GRAVITY, RigidBodyParams
from .geom import NavGains, exp_so3
from .planner import PlannerParams
from .trajectory import CircularSpec, HoverSpec, SampledSpec, TrajectorySpec, load_sampled_csv


class ConfigError(ValueError):
    """Schema violation; the message carries the offending dotted key path."""


@dataclass(frozen=True)
class InitialCondition:
    """Initial rigid-body state; attitude given as an axis-angle error
    composed with the desired attitude, R(0) = exp(angle * axis) R_d(0)."""

    position: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray
    attitude_error_axis: np.ndarray
    attitude_error_angle: float     # rad

    def rotation(self, r_d0: np.ndarray) -> np.ndarray:
        axis = np.asarray(self.attitude_error_axis, dtype=float)
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            return r_d0.copy()
        return exp_so3(self.attitude_error_angle * axis / norm) @ r_d0


@dataclass(frozen=True)
class RunSettings:
    dt: float
    t_final: float
    settle_threshold: float = 0.02  # m
    output_dir: Optional[str] = None


@dataclass(frozen=True)
class ScenarioConfig:
    params: RigidBodyParams
    gains: ControlGains
    limits: ActuationLimits
    planner: PlannerParams
    trajectory: TrajectorySpec
    initial: InitialCondition
    run: RunSettings


def _section(raw: dict, name: str, required: bool = True) -> dict:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing required section [{name}]")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _pop(data: dict, section: str, key: str, *, required: bool = False, default=None):
    if key in data:
        return data.pop(key)
    if required:
        raise ConfigError(f"missing required key {section}.{key}")
    return default


def _check_empty(data: dict, section: str) -> None:
    if data:
        key = sorted(data)[0]
        raise ConfigError(f"unknown key {section}.{key}")


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number")
    return float(value)


def _as_vec3(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"{path} must be a list of 3 numbers")
    return np.array([_as_float(v, path) for v in value])


def _as_gain(value, path: str):
    """Scalar, 3-list diagonal, or 9-list row-major matrix."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, list):
        if len(value) == 3:
            return np.array([_as_float(v, path) for v in value])
        if len(value) == 9:
            return np.array([_as_float(v, path) for v in value]).reshape(3, 3)
    raise ConfigError(f"{path} must be a scalar, 3-list diagonal, or 9-list matrix")


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario from TOML text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc

    known = {"body", "gains", "limits", "planner", "trajectory", "initial", "run"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown section [{sorted(unknown)[0]}]")

    body = _section(raw, "body")
    mass = _as_float(_pop(body, "body", "mass", required=True), "body.mass")
    inertia = _as_gain(_pop(body, "body", "inertia", required=True), "body.inertia")
    if isinstance(inertia, float):
        inertia = inertia * np.eye(3)
    elif inertia.shape == (3,):
        inertia = np.diag(inertia)
    gravity = _as_float(_pop(body, "body", "gravity", default=DEFAULT_GRAVITY), "body.gravity")
    _check_empty(body, "body")
    params = _wrap("body", RigidBodyParams, mass=mass, inertia=inertia, gravity=gravity)

    gains_raw = _section(raw, "gains")
    k_r_val = _pop(gains_raw, "gains", "k_r", required=True)
    k_r_gain = _as_gain(k_r_val, "gains.k_r")
    if isinstance(k_r_gain, float):
        k_r = _wrap("gains.k_r", NavGains.isotropic, k_r_gain)
    elif k_r_gain.shape == (3,):
        k_r = _wrap("gains.k_r", NavGains, *k_r_gain)
    else:
        raise ConfigError("gains.k_r must be a scalar or 3-list diagonal")
    gains = _wrap("gains", ControlGains,
                  k_x=_as_gain(_pop(gains_raw, "gains", "k_x", required=True), "gains.k_x"),
                  k_v=_as_gain(_pop(gains_raw, "gains", "k_v", required=True), "gains.k_v"),
                  k_r=k_r,
                  k_omega=_as_gain(_pop(gains_raw, "gains", "k_omega", required=True),
                                   "gains.k_omega"),
                  psi_max=_as_float(_pop(gains_raw, "gains", "psi_max", required=True),
                                    "gains.psi_max"),
                  psi_sublevel=_as_float(_pop(gains_raw, "gains", "psi_sublevel", required=True),
                                         "gains.psi_sublevel"))
    _check_empty(gains_raw, "gains")
    _wrap("gains", gains.validate)

    limits_raw = _section(raw, "limits")
    theta_max = math.radians(_as_float(
        _pop(limits_raw, "limits", "theta_max_deg", required=True), "limits.theta_max_deg"))
    f_max = _as_float(_pop(limits_raw, "limits", "f_max", required=True), "limits.f_max")
    _check_empty(limits_raw, "limits")
    limits = _wrap("limits", ActuationLimits, theta_max=theta_max, f_max=f_max)

    planner_raw = _section(raw, "planner")
    k_ref_val = _pop(planner_raw, "planner", "k_r_ref", default=None)
    if k_ref_val is None:
        k_r_ref = k_r.scaled(2.0)
    else:
        g = _as_gain(k_ref_val, "planner.k_r_ref")
        k_r_ref = (_wrap("planner.k_r_ref", NavGains.isotropic, g)
                   if isinstance(g, float) else _wrap("planner.k_r_ref", NavGains, *g))
    epsilon = _as_float(_pop(planner_raw, "planner", "epsilon", required=True),
                        "planner.epsilon")
    gamma_val = _pop(planner_raw, "planner", "gamma", required=True)
    if isinstance(gamma_val, (int, float)) and not isinstance(gamma_val, bool):
        gamma = float(gamma_val) * np.eye(2)
    elif isinstance(gamma_val, list) and len(gamma_val) == 4:
        gamma = np.array([_as_float(v, "planner.gamma") for v in gamma_val]).reshape(2, 2)
    else:
        raise ConfigError("planner.gamma must be a scalar or 4-list 2x2 matrix")
    _check_empty(planner_raw, "planner")
    planner = _wrap("planner", PlannerParams, k_r_ref=k_r_ref, epsilon=epsilon,
                    gamma=gamma, theta_max=limits.theta_max)

    traj_raw = _section(raw, "trajectory")
    kind = _pop(traj_raw, "trajectory", "type", required=True)
    if kind == "hover":
        point = _as_vec3(_pop(traj_raw, "trajectory", "point", required=True),
                         "trajectory.point")
        heading = math.radians(_as_float(
            _pop(traj_raw, "trajectory", "heading_deg", default=0.0),
            "trajectory.heading_deg"))
        trajectory: TrajectorySpec = HoverSpec(point=point, heading=heading)
    elif kind == "circular":
        trajectory = _wrap("trajectory", CircularSpec,
                           radius=_as_float(_pop(traj_raw, "trajectory", "radius", default=1.0),
                                            "trajectory.radius"),
                           rate=_as_float(_pop(traj_raw, "trajectory", "rate", default=1.0),
                                          "trajectory.rate"),
                           height=_as_float(_pop(traj_raw, "trajectory", "height", default=1.0),
                                            "trajectory.height"),
                           roll_amplitude=math.radians(_as_float(
                               _pop(traj_raw, "trajectory", "roll_amplitude_deg", default=0.0),
                               "trajectory.roll_amplitude_deg")),
                           roll_rate=_as_float(
                               _pop(traj_raw, "trajectory", "roll_rate", default=1.0),
                               "trajectory.roll_rate"))
    elif kind == "sampled":
        csv = _pop(traj_raw, "trajectory", "csv", required=True)
        trajectory = _wrap("trajectory.csv", load_sampled_csv, csv)
    else:
        raise ConfigError(f"trajectory.type must be hover, circular, or sampled; got {kind!r}")
    _check_empty(traj_raw, "trajectory")

    init_raw = _section(raw, "initial")
    initial = InitialCondition(
        position=_as_vec3(_pop(init_raw, "initial", "position", required=True),
                          "initial.position"),
        velocity=_as_vec3(_pop(init_raw, "initial", "velocity", default=[0.0, 0.0, 0.0]),
                          "initial.velocity"),
        omega=_as_vec3(_pop(init_raw, "initial", "omega", default=[0.0, 0.0, 0.0]),
                       "initial.omega"),
        attitude_error_axis=_as_vec3(
            _pop(init_raw, "initial", "attitude_error_axis", default=[1.0, 0.0, 0.0]),
            "initial.attitude_error_axis"),
        attitude_error_angle=math.radians(_as_float(
            _pop(init_raw, "initial", "attitude_error_angle_deg", default=0.0),
            "initial.attitude_error_angle_deg")),
    )
    _check_empty(init_raw, "initial")

    run_raw = _section(raw, "run")
    dt = _as_float(_pop(run_raw, "run", "dt", default=1e-3), "run.dt")
    t_final = _as_float(_pop(run_raw, "run", "t_final", required=True), "run.t_final")
    settle = _as_float(_pop(run_raw, "run", "settle_threshold", default=0.02),
                       "run.settle_threshold")
    output_dir = _pop(run_raw, "run", "output_dir", default=None)
    _check_empty(run_raw, "run")
    if dt <= 0.0:
        raise ConfigError("run.dt must be positive")
    if t_final <= dt:
        raise ConfigError("run.t_final must exceed run.dt")
    run = RunSettings(dt=dt, t_final=t_final, settle_threshold=settle,
                      output_dir=output_dir)

    return ScenarioConfig(params=params, gains=gains, limits=limits, planner=planner,
                          trajectory=trajectory, initial=initial, run=run)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(float(value)) if isinstance(value, float) else str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(float(v)) for v in np.asarray(value).reshape(-1)) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Emit TOML that parses back to a semantically identical config."""
    lines = []

    def sec(name: str, items: dict) -> None:
        lines.append(f"[{name}]")
        for key, value in items.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")

    sec("body", {"mass": cfg.params.mass,
                 "inertia": cfg.params.inertia.reshape(-1),
                 "gravity": cfg.params.gravity})
    sec("gains", {"k_x": cfg.gains.k_x.reshape(-1),
                  "k_v": cfg.gains.k_v.reshape(-1),
                  "k_r": cfg.gains.k_r.diag,
                  "k_omega": cfg.gains.k_omega.reshape(-1),
                  "psi_max": cfg.gains.psi_max,
                  "psi_sublevel": cfg.gains.psi_sublevel})
    sec("limits", {"theta_max_deg": math.degrees(cfg.limits.theta_max),
                   "f_max": cfg.limits.f_max})
    sec("planner", {"k_r_ref": cfg.planner.k_r_ref.diag,
                    "epsilon": cfg.planner.epsilon,
                    "gamma": cfg.planner.gamma.reshape(-1)})
    traj = cfg.trajectory
    if isinstance(traj, HoverSpec):
        sec("trajectory", {"type": "hover", "point": traj.point,
                           "heading_deg": math.degrees(traj.heading)})
    elif isinstance(traj, CircularSpec):
        sec("trajectory", {"type": "circular", "radius": traj.radius, "rate": traj.rate,
                           "height": traj.height,
                           "roll_amplitude_deg": math.degrees(traj.roll_amplitude),
                           "roll_rate": traj.roll_rate})
    elif isinstance(traj, SampledSpec):
        raise TypeError("sampled trajectories serialize via their CSV path; "
                        "write the table with trajectory.write_sampled_csv")
    sec("initial", {"position": cfg.initial.position,
                    "velocity": cfg.initial.velocity,
                    "omega": cfg.initial.omega,
                    "attitude_error_axis": cfg.initial.attitude_error_axis,
                    "attitude_error_angle_deg": math.degrees(cfg.initial.attitude_error_angle)})
    sec("run", {"dt": cfg.run.dt, "t_final": cfg.run.t_final,
                "settle_threshold": cfg.run.settle_threshold,
                "output_dir": cfg.run.output_dir})
    return "\n".join(lines)


PRESETS = ("circle_roll", "hover")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("conetrack.presets").joinpath(f"{name}.toml").read_text()


def load_preset(name: str) -> ScenarioConfig:
    return parse_config(preset_text(name))
