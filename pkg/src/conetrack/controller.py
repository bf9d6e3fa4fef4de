"""Force and torque laws with navigation-error scaling, cone margin, and
reference-feasibility checking.

The demanded force is the standard PD + feedforward law in the inertial
frame; the applied body force is its resolution in the tracked reference
frame, scaled by c(Psi) = (Psi_M - Psi)/Psi_M so the delivered direction
stays inside the actuation cone whenever the reference is feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import RigidBodyParams
from .geom import E3, NavGains, attitude_error_vector, psi_constants
from .trajectory import TrajectorySpec, sample


class ControlError(RuntimeError):
    """State left the certified region (Psi >= Psi_M) or degenerate input."""


def _as_gain_matrix(value, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.ndim == 0:
        m = float(m) * np.eye(3)
    elif m.shape == (3,):
        m = np.diag(m)
    if m.shape != (3, 3):
        raise ValueError(f"{name} must be a scalar, a 3-vector diagonal, or 3x3")
    return m


@dataclass(frozen=True)
class ControlGains:
    """Position / velocity / attitude / angular-rate gains plus the scaling
    ceiling Psi_M and the certified sublevel psi."""

    k_x: np.ndarray
    k_v: np.ndarray
    k_r: NavGains
    k_omega: np.ndarray
    psi_max: float          # Psi_M, scaling ceiling (J)
    psi_sublevel: float     # psi, certified sublevel (J)

    def __post_init__(self):
        for name in ("k_x", "k_v", "k_omega"):
            object.__setattr__(self, name, _as_gain_matrix(getattr(self, name), name))

    def validate(self) -> None:
        for name in ("k_x", "k_v", "k_omega"):
            m = getattr(self, name)
            if np.abs(m - m.T).max() > 1e-12 or np.linalg.eigvalsh(m).min() <= 0.0:
                raise ValueError(f"{name} must be symmetric positive definite")
        c1 = psi_constants(self.k_r, self.psi_sublevel).c1  # raises if psi >= c1
        if not self.psi_max > self.psi_sublevel:
            raise ValueError("psi_max must exceed the certified sublevel psi")
        assert self.psi_sublevel < c1


@dataclass(frozen=True)
class ActuationLimits:
    """Cone half-angle (rad; 0 = locked tilt) and max force magnitude (N)."""

    theta_max: float
    f_max: float

    def __post_init__(self):
        if not 0.0 <= self.theta_max < 0.5 * math.pi:
            raise ValueError(f"theta_max must be in [0, pi/2), got {self.theta_max}")
        if self.f_max <= 0.0:
            raise ValueError(f"f_max must be positive, got {self.f_max}")


@dataclass(frozen=True)
class ControlDiagnostics:
    f_c_d: np.ndarray       # demanded force, inertial (N)
    psi: float              # navigation error used in the scaling (J)
    c: float                # scaling factor in (0, 1]
    cos_theta: float        # cone margin of the applied body force
    e_f: np.ndarray         # force mismatch f_c_d - R f_c (N)


def desired_force(gains: ControlGains, params: RigidBodyParams,
                  e_x: np.ndarray, e_v: np.ndarray, a_d: np.ndarray) -> np.ndarray:
    """Inertial force demand -K_x e_x - K_v e_v + m (a_d + g e3)."""
    return -(gains.k_x @ e_x) - (gains.k_v @ e_v) \
        + params.mass * (a_d + params.gravity * E3)


def scaling(psi: float, psi_max: float) -> float:
    """c(Psi) = (Psi_M - Psi)/Psi_M in (0, 1]; errors outside the certified
    region rather than silently zeroing the force."""
    if psi < 0.0:
        raise ControlError(f"navigation error {psi:g} is negative")
    if psi >= psi_max:
        raise ControlError(
            f"navigation error {psi:g} J reached the scaling ceiling {psi_max:g} J "
            "(outside the certified region)")
    return (psi_max - psi) / psi_max


def control_force(gains: ControlGains, f_c_d: np.ndarray, r_ref: np.ndarray,
                  psi: float) -> np.ndarray:
    """Body-frame force c(Psi) R_ref^T f_c_d; norm never exceeds |f_c_d|."""
    return scaling(psi, gains.psi_max) * (r_ref.T @ f_c_d)


def control_torque(gains: ControlGains, params: RigidBodyParams,
                   r: np.ndarray, omega: np.ndarray, r_ref: np.ndarray,
                   omega_ref: np.ndarray, omega_ref_dot: np.ndarray) -> np.ndarray:
    """Torque -R_ref^T e_R - K_omega e_omega + I omega_ref_dot + omega_ref x I omega.

    The gyroscopic feedforward keeps omega (not omega_ref) in the cross
    product; no cancellation of benign nonlinearities.
    """
    e_r = attitude_error_vector(gains.k_r, r @ r_ref.T)
    e_omega = omega - omega_ref
    return (-(r_ref.T @ e_r) - (gains.k_omega @ e_omega)
            + params.inertia @ omega_ref_dot
            + np.cross(omega_ref, params.inertia @ omega))


def cone_margin(f_c: np.ndarray) -> float:
    """cos(theta) = f_c . e3 / |f_c| of a body-frame force."""
    norm = float(np.linalg.norm(f_c))
    if norm == 0.0:
        raise ControlError("cone margin undefined for zero force")
    return float(f_c[2]) / norm


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst-case feasibility margins of a reference trajectory."""

    f_m_d: float                    # sup |m g e3 + m a_d| over the horizon (N)
    f_m_d_time: float
    force_feasible: bool            # f_m_d < f_max
    force_margin: float             # f_max - f_m_d
    cos_theta_min: float            # worst (f_c_d . b_d3)/|f_c_d| at zero error
    cos_theta_min_time: float
    attitude_feasible: bool         # cos_theta_min >= cos(theta_max)
    attitude_margin: float          # cos_theta_min - cos(theta_max)
    infeasible_windows: tuple       # ((t_start, t_end), ...) attitude violations
    horizon: float
    dt: float


def feasibility_check(spec: TrajectorySpec, limits: ActuationLimits,
                      params: RigidBodyParams, horizon: float, dt: float) -> FeasibilityReport:
    """Sample the horizon and report whether the zero-error force demand stays
    below f_max and inside the cone around the desired third axis."""
    times = np.arange(0.0, horizon + 0.5 * dt, dt)
    cos_limit = math.cos(limits.theta_max)
    f_m_d, f_m_d_time = -math.inf, 0.0
    cos_min, cos_min_time = math.inf, 0.0
    windows = []
    window_start: Optional[float] = None
    for t in times:
        cmd = sample(spec, float(t))
        f_nominal = params.mass * (cmd.a_d + params.gravity * E3)
        norm_f = float(np.linalg.norm(f_nominal))
        if norm_f > f_m_d:
            f_m_d, f_m_d_time = norm_f, float(t)
        cos_t = float(f_nominal @ (cmd.R_d @ E3)) / norm_f if norm_f > 0.0 else 1.0
        if cos_t < cos_min:
            cos_min, cos_min_time = cos_t, float(t)
        violating = cos_t < cos_limit
        if violating and window_start is None:
            window_start = float(t)
        elif not violating and window_start is not None:
            windows.append((window_start, float(t)))
            window_start = None
    if window_start is not None:
        windows.append((window_start, float(times[-1])))
    return FeasibilityReport(
        f_m_d=f_m_d,
        f_m_d_time=f_m_d_time,
        force_feasible=bool(f_m_d < limits.f_max),
        force_margin=limits.f_max - f_m_d,
        cos_theta_min=cos_min,
        cos_theta_min_time=cos_min_time,
        attitude_feasible=bool(cos_min >= cos_limit),
        attitude_margin=cos_min - cos_limit,
        infeasible_windows=tuple(windows),
        horizon=horizon,
        dt=dt,
    )
