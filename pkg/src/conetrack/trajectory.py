"""Desired-trajectory generators: position/velocity/acceleration plus desired
orientation, body angular velocity and acceleration at any query time.

Three spec flavors: a constant hover pose, a circular path with a superimposed
roll about the frame's third axis, and tabulated trajectories with cubic
interpolation (loadable from CSV).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .geom import E3, exp_so3, hat, log_so3, project_to_so3, require_rotation

_FD_STEP = 1e-6  # finite-difference fallback step for tabulated rotations


@dataclass(frozen=True)
class TrajectoryCommand:
    """Desired kinematics at one instant: x_d, v_d, a_d in the inertial frame,
    R_d, and omega_d / omega_d_dot in the desired body frame."""

    x_d: np.ndarray
    v_d: np.ndarray
    a_d: np.ndarray
    R_d: np.ndarray
    omega_d: np.ndarray
    omega_d_dot: np.ndarray


@dataclass(frozen=True)
class HoverSpec:
    """Constant pose: position ``point`` with heading (yaw) about e3."""

    point: np.ndarray
    heading: float = 0.0


@dataclass(frozen=True)
class CircularSpec:
    """Circle of given radius/angular rate at constant height, frame aligned
    with the path tangent, plus a sinusoidal roll about the third frame axis.

    The tangent direction is well defined only for radius > 0 and rate > 0
    (the degenerate zero-speed case is excluded by construction).
    """

    radius: float = 1.0
    rate: float = 1.0
    height: float = 1.0
    roll_amplitude: float = 0.0
    roll_rate: float = 1.0

    def __post_init__(self):
        if not (self.radius > 0.0 and self.rate > 0.0):
            raise ValueError("circular spec needs radius > 0 and rate > 0")


@dataclass(frozen=True)
class SampledSpec:
    """Tabulated trajectory; columns are cubic-interpolated between samples.

    ``rotations`` are interpolated componentwise then re-projected to SO(3).
    ``omega`` / ``omega_dot`` may be omitted, in which case body rates come
    from central finite differences of the interpolated rotation.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    rotations: np.ndarray          # (n, 9) row-major
    omegas: Optional[np.ndarray] = None
    omega_dots: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("sampled spec needs at least two time samples")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("sampled times must be strictly increasing")
        n = t.size
        for name, arr, width in (("positions", self.positions, 3),
                                 ("velocities", self.velocities, 3),
                                 ("accelerations", self.accelerations, 3),
                                 ("rotations", self.rotations, 9)):
            a = np.asarray(arr, dtype=float)
            if a.shape != (n, width):
                raise ValueError(f"{name} must have shape ({n}, {width}), got {a.shape}")
        for i in range(n):
            require_rotation(self.rotations[i].reshape(3, 3), tol=1e-6,
                             what=f"rotations row {i}")
        object.__setattr__(self, "_splines", _build_splines(self))

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])


TrajectorySpec = Union[HoverSpec, CircularSpec, SampledSpec]


def _build_splines(spec: SampledSpec) -> dict:
    t = np.asarray(spec.times, dtype=float)
    splines = {
        "x": CubicSpline(t, spec.positions),
        "v": CubicSpline(t, spec.velocities),
        "a": CubicSpline(t, spec.accelerations),
        "R": CubicSpline(t, spec.rotations),
    }
    if spec.omegas is not None:
        splines["omega"] = CubicSpline(t, spec.omegas)
    if spec.omega_dots is not None:
        splines["omega_dot"] = CubicSpline(t, spec.omega_dots)
    return splines


def _circular_frame(spec: CircularSpec, t: float) -> np.ndarray:
    s, c = math.sin(spec.rate * t), math.cos(spec.rate * t)
    t_d = np.array([-s, c, 0.0])          # unit tangent
    b_d = np.array([0.0, 0.0, -1.0])
    n_d = np.cross(b_d, t_d)
    return np.column_stack([-n_d, -b_d, t_d])


def sample(spec: TrajectorySpec, t: float) -> TrajectoryCommand:
    """Evaluate the trajectory at time ``t >= 0``."""
    if t < 0.0:
        raise ValueError(f"trajectory queried at t = {t} < 0")
    zero = np.zeros(3)

    if isinstance(spec, HoverSpec):
        ch, sh = math.cos(spec.heading), math.sin(spec.heading)
        r_d = np.array([[ch, -sh, 0.0], [sh, ch, 0.0], [0.0, 0.0, 1.0]])
        return TrajectoryCommand(np.asarray(spec.point, dtype=float), zero, zero,
                                 r_d, zero.copy(), zero.copy())

    if isinstance(spec, CircularSpec):
        om, r = spec.rate, spec.radius
        s, c = math.sin(om * t), math.cos(om * t)
        x_d = np.array([r * c, r * s, spec.height])
        v_d = np.array([-r * om * s, r * om * c, 0.0])
        a_d = np.array([-r * om * om * c, -r * om * om * s, 0.0])
        th = spec.roll_amplitude * math.sin(spec.roll_rate * t)
        th_dot = spec.roll_amplitude * spec.roll_rate * math.cos(spec.roll_rate * t)
        th_ddot = -spec.roll_amplitude * spec.roll_rate ** 2 * math.sin(spec.roll_rate * t)
        ct, st = math.cos(th), math.sin(th)
        r_roll = np.array([[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]])
        r_d = _circular_frame(spec, t) @ r_roll
        # frame body rate is (0, rate, 0); the roll transports it and adds spin
        omega_d = np.array([om * st, om * ct, th_dot])
        omega_d_dot = np.array([om * th_dot * ct, -om * th_dot * st, th_ddot])
        return TrajectoryCommand(x_d, v_d, a_d, r_d, omega_d, omega_d_dot)

    if isinstance(spec, SampledSpec):
        if not spec.t_min <= t <= spec.t_max:
            raise ValueError(
                f"sampled trajectory queried at t = {t} outside [{spec.t_min}, {spec.t_max}]")
        sp = spec._splines
        r_d = project_to_so3(sp["R"](t).reshape(3, 3))
        if "omega" in sp:
            omega_d = sp["omega"](t)
        else:
            omega_d = _rotation_rate_fd(sp["R"], t, spec.t_min, spec.t_max)
        if "omega_dot" in sp:
            omega_d_dot = sp["omega_dot"](t)
        else:
            h = _FD_STEP
            lo, hi = max(t - h, spec.t_min), min(t + h, spec.t_max)
            w_lo = _rotation_rate_fd(sp["R"], lo, spec.t_min, spec.t_max)
            w_hi = _rotation_rate_fd(sp["R"], hi, spec.t_min, spec.t_max)
            omega_d_dot = (w_hi - w_lo) / (hi - lo)
        return TrajectoryCommand(sp["x"](t), sp["v"](t), sp["a"](t), r_d,
                                 omega_d, omega_d_dot)

    raise TypeError(f"unknown trajectory spec {type(spec).__name__}")


def _rotation_rate_fd(r_spline, t: float, t_min: float, t_max: float) -> np.ndarray:
    h = _FD_STEP
    lo, hi = max(t - h, t_min), min(t + h, t_max)
    r_lo = project_to_so3(r_spline(lo).reshape(3, 3))
    r_hi = project_to_so3(r_spline(hi).reshape(3, 3))
    return log_so3(r_lo.T @ r_hi) / (hi - lo)


SAMPLED_CSV_COLUMNS = (
    ["t"]
    + [f"xd_{i}" for i in (1, 2, 3)]
    + [f"vd_{i}" for i in (1, 2, 3)]
    + [f"ad_{i}" for i in (1, 2, 3)]
    + [f"Rd_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
    + [f"omegad_{i}" for i in (1, 2, 3)]
    + [f"omegad_dot_{i}" for i in (1, 2, 3)]
)


def load_sampled_csv(path) -> SampledSpec:
    """Load a tabulated trajectory. Header must match ``SAMPLED_CSV_COLUMNS``,
    except that the omega / omega-dot blocks may be omitted together."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    full, reduced = SAMPLED_CSV_COLUMNS, SAMPLED_CSV_COLUMNS[:22]
    if header == full:
        has_rates = True
    elif header == reduced:
        has_rates = False
    else:
        raise ValueError(f"unexpected CSV header in {path}: {header[:5]}...")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"CSV width {data.shape[1]} does not match header in {path}")
    return SampledSpec(
        times=data[:, 0],
        positions=data[:, 1:4],
        velocities=data[:, 4:7],
        accelerations=data[:, 7:10],
        rotations=data[:, 10:19],
        omegas=data[:, 19:22] if has_rates else None,
        omega_dots=data[:, 22:25] if has_rates else None,
    )


def write_sampled_csv(spec: TrajectorySpec, path, t0: float, t1: float, dt: float) -> None:
    """Tabulate any spec to the sampled-CSV interchange format."""
    times = np.arange(t0, t1 + 0.5 * dt, dt)
    rows = []
    for t in times:
        cmd = sample(spec, float(t))
        rows.append(np.concatenate([[t], cmd.x_d, cmd.v_d, cmd.a_d,
                                    cmd.R_d.reshape(-1), cmd.omega_d, cmd.omega_d_dot]))
    header = ",".join(SAMPLED_CSV_COLUMNS)
    np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="",
               fmt="%.17g")


@dataclass(frozen=True)
class ConsistencyReport:
    """Max finite-difference residuals of the sampled derivatives."""

    max_velocity_residual: float
    max_acceleration_residual: float
    max_rotation_rate_residual: float
    n_samples: int


def consistency_check(spec: TrajectorySpec, t0: float, t1: float, dt: float) -> ConsistencyReport:
    """Central-difference check of x_d vs v_d, v_d vs a_d, and R_d vs omega_d
    over ``[t0, t1]``; returns the worst residuals."""
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    times = np.arange(t0, t1 + 0.5 * dt, dt)
    cmds = [sample(spec, float(t)) for t in times]
    x = np.array([c.x_d for c in cmds])
    v = np.array([c.v_d for c in cmds])
    a = np.array([c.a_d for c in cmds])

    dv = (x[2:] - x[:-2]) / (2.0 * dt) - v[1:-1]
    da = (v[2:] - v[:-2]) / (2.0 * dt) - a[1:-1]
    res_v = float(np.abs(dv).max()) if dv.size else 0.0
    res_a = float(np.abs(da).max()) if da.size else 0.0

    res_w = 0.0
    for i in range(1, len(cmds) - 1):
        w_fd = log_so3(cmds[i - 1].R_d.T @ cmds[i + 1].R_d) / (2.0 * dt)
        res_w = max(res_w, float(np.abs(w_fd - cmds[i].omega_d).max()))
    return ConsistencyReport(res_v, res_a, res_w, len(cmds))
