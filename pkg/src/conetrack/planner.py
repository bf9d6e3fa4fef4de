"""Feasible reference-attitude generation.

The reference rotation is the product R_dc = R_c R_r of a base rotation R_c
(third axis along the demanded force, first axis steered toward the desired
heading) and a relative rotation R_r driven toward the desired attitude. The
third relative axis is kept inside the actuation cone ``|b_r3 planar| <= delta``
by a weighted projection operator acting on its planar rate.

Frame conventions: R_r evolves by left multiplication, ``R_r_dot = hat(omega_r) R_r``;
omega_c is the body rate of R_c (``hat(omega_c) = R_c^T R_c_dot``); with these,
``omega_dc = R_r^T (omega_c + omega_r)`` is the body rate of R_dc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .geom import E3, NavGains, attitude_error_vector, exp_so3, hat, log_so3, nav_error, project_to_so3
from .trajectory import TrajectoryCommand

FORCE_EPS = 1e-6        # N; below this the base rotation is degenerate
AXIS_EPS = 1e-6         # |b_c3 x b_d1| below this falls back to the second axis
CONE_REPAIR_LIMIT = 1e-2  # drift repairs beyond this indicate a real violation


class PlannerError(RuntimeError):
    """Degenerate demanded force or a genuine cone-invariant violation."""


@dataclass(frozen=True)
class PlannerParams:
    """Reference-tracking gain, projection margin epsilon in (0,1), 2x2 SPD
    projection weighting, and the cone half-angle theta_max (delta = sin)."""

    k_r_ref: NavGains
    epsilon: float
    gamma: np.ndarray
    theta_max: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (2, 2) or np.abs(g - g.T).max() > 1e-12 or np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("gamma must be 2x2 symmetric positive definite")
        # theta_max = 0 is the locked (under-actuated) configuration
        if not 0.0 <= self.theta_max < 0.5 * math.pi:
            raise ValueError(f"theta_max must be in [0, pi/2), got {self.theta_max}")
        object.__setattr__(self, "gamma", g)

    @property
    def delta(self) -> float:
        return math.sin(self.theta_max)


@dataclass
class PlannerState:
    """Relative rotation plus one step of history for the finite-difference
    base-frame rate and reference acceleration."""

    R_r: np.ndarray
    R_c_prev: Optional[np.ndarray] = None
    omega_dc_prev: Optional[np.ndarray] = None

    @classmethod
    def initial(cls) -> "PlannerState":
        return cls(R_r=np.eye(3))


@dataclass(frozen=True)
class PlannerOutput:
    R_dc: np.ndarray
    omega_dc: np.ndarray
    omega_dc_dot: np.ndarray
    R_c: np.ndarray
    psi_dc: float                  # navigation error of R_dc vs the desired R_d
    projection_active: bool
    heading_fallback: bool         # base rotation used the secondary heading axis
    cone_repair: float             # post-step planar overshoot removed (drift repair)


def base_rotation(f_c_d: np.ndarray, b_d1: np.ndarray,
                  b_d2: Optional[np.ndarray] = None,
                  f_eps: float = FORCE_EPS,
                  axis_eps: float = AXIS_EPS) -> Tuple[np.ndarray, bool]:
    """Rotation with third axis along the demanded force and second axis
    normal to the plane of (force, desired first axis).

    Returns (R_c, fallback_used). Falls back to ``b_d2`` when the demanded
    force is parallel to ``b_d1`` within ``axis_eps``; raises if the force
    norm is below ``f_eps`` or no usable heading axis remains.
    """
    norm_f = float(np.linalg.norm(f_c_d))
    if norm_f < f_eps:
        raise PlannerError(f"demanded force norm {norm_f:g} N below {f_eps:g} N; "
                           "base rotation undefined")
    b_c3 = f_c_d / norm_f
    cross = np.cross(b_c3, b_d1)
    norm_c = float(np.linalg.norm(cross))
    fallback = False
    if norm_c < axis_eps:
        if b_d2 is None:
            raise PlannerError("demanded force parallel to the heading axis and "
                               "no fallback axis supplied")
        cross = np.cross(b_c3, b_d2)
        norm_c = float(np.linalg.norm(cross))
        fallback = True
        if norm_c < axis_eps:
            raise PlannerError("demanded force parallel to both heading axes")
    b_c2 = cross / norm_c
    b_c1 = np.cross(b_c2, b_c3)
    return np.column_stack([b_c1, b_c2, b_c3]), fallback


def convex_boundary(b_p: np.ndarray, epsilon: float, delta: float) -> float:
    """Boundary function f = ((1+eps)|b_p|^2 - delta^2) / (eps delta^2);
    f = 0 where the projection starts to act, f = 1 on the cone boundary."""
    if delta <= 0.0:
        raise ValueError("convex boundary undefined for delta <= 0")
    nsq = float(b_p @ b_p)
    return ((1.0 + epsilon) * nsq - delta * delta) / (epsilon * delta * delta)


def boundary_gradient(b_p: np.ndarray, epsilon: float, delta: float) -> np.ndarray:
    return (2.0 * (1.0 + epsilon) / (epsilon * delta * delta)) * np.asarray(b_p, dtype=float)


def project_b3_rate(b_p: np.ndarray, b_p_rate: np.ndarray, params: PlannerParams) -> np.ndarray:
    """Weighted projection of the planar rate: removes the outward radial
    component smoothly as f goes 0 -> 1, leaves inward or interior rates
    untouched. At f = 1 the radial component is removed entirely."""
    f = convex_boundary(b_p, params.epsilon, params.delta)
    if f <= 0.0:
        return np.asarray(b_p_rate, dtype=float)
    grad = boundary_gradient(b_p, params.epsilon, params.delta)
    outward = float(b_p_rate @ grad)
    if outward <= 0.0:
        return np.asarray(b_p_rate, dtype=float)
    g_grad = params.gamma @ grad
    return b_p_rate - (f * outward / float(grad @ g_grad)) * g_grad


def desired_relative_rate(R_r: np.ndarray, R_dc: np.ndarray, R_d: np.ndarray,
                          omega_d: np.ndarray, omega_c: np.ndarray,
                          k_r_ref: NavGains) -> np.ndarray:
    """Relative rate that makes the reference-attitude navigation error decay:
    substituting it gives d(Psi_dc)/dt = -|e_R_dc|^2."""
    e_r_dc = attitude_error_vector(k_r_ref, R_dc @ R_d.T)
    return R_r @ omega_d - omega_c - R_r @ (R_d.T @ e_r_dc)


def _rk4_left(R: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """RK4 step of R_dot = hat(omega) R with constant omega."""
    w = hat(omega)
    k1 = w @ R
    k2 = w @ (R + 0.5 * dt * k1)
    k3 = w @ (R + 0.5 * dt * k2)
    k4 = w @ (R + dt * k3)
    return R + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _cone_repair(R_r: np.ndarray, delta: float) -> Tuple[np.ndarray, float]:
    """Rotate R_r minimally so its third axis planar norm is back at delta.

    The exact projected flow never leaves the cone; a fixed integration step
    exits by O(dt^2 |omega_r|^2) at the boundary, which this removes. The
    excess is returned so callers can flag genuine violations.
    """
    b = R_r[:, 2]
    planar = math.hypot(b[0], b[1])
    if planar <= delta:
        return R_r, 0.0
    if delta == 0.0:
        target = E3.copy()
    else:
        scale = delta / planar
        z = math.sqrt(max(1.0 - delta * delta, 0.0))
        target = np.array([b[0] * scale, b[1] * scale, z])
        target /= np.linalg.norm(target)
    axis = np.cross(b, target)
    s = float(np.linalg.norm(axis))
    if s < 1e-18:
        return R_r, planar - delta
    angle = math.asin(min(1.0, s))
    return exp_so3(axis * (angle / s)) @ R_r, planar - delta


def planner_step(state: PlannerState, f_c_d: np.ndarray, cmd: TrajectoryCommand,
                 params: PlannerParams, dt: float) -> Tuple[PlannerState, PlannerOutput]:
    """Advance the reference attitude one step.

    Computes the base rotation from the demanded force, its body rate by
    finite differences of the rotation history, the feasibility-projected
    relative rate, and integrates the relative rotation (RK4, re-projected to
    SO(3), cone drift repaired). The reference acceleration is the backward
    difference of the emitted reference rate (zero on the first step).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    R_d, omega_d = cmd.R_d, cmd.omega_d
    R_c, fallback = base_rotation(f_c_d, R_d @ np.array([1.0, 0.0, 0.0]),
                                  b_d2=R_d @ np.array([0.0, 1.0, 0.0]))

    if state.R_c_prev is None:
        omega_c = np.zeros(3)
    else:
        omega_c = log_so3(state.R_c_prev.T @ R_c) / dt

    R_r = state.R_r
    R_dc = R_c @ R_r
    omega_r_d = desired_relative_rate(R_r, R_dc, R_d, omega_d, omega_c, params.k_r_ref)
    b_r3 = R_r[:, 2]
    delta = params.delta

    if delta == 0.0:
        # locked tilt: the third relative axis is pinned to e3, only spin remains
        b_dot = np.zeros(3)
        active = bool(np.linalg.norm(np.cross(omega_r_d, b_r3)[:2]) > 0.0)
    else:
        b_dot_des = np.cross(omega_r_d, b_r3)
        b_p = b_r3[:2]
        f_val = convex_boundary(b_p, params.epsilon, delta)
        planar = project_b3_rate(b_p, b_dot_des[:2], params)
        active = bool(f_val > 0.0
                      and float(b_dot_des[:2] @ boundary_gradient(b_p, params.epsilon, delta)) > 0.0)
        # third component from the unit-norm constraint; the radicand is at
        # least cos(theta_max)^2 > 0 inside the cone
        b3_dot = -(b_r3[0] * planar[0] + b_r3[1] * planar[1]) \
            / math.sqrt(1.0 - b_r3[0] ** 2 - b_r3[1] ** 2)
        b_dot = np.array([planar[0], planar[1], b3_dot])

    omega_r = np.cross(b_r3, b_dot) + float(b_r3 @ omega_r_d) * b_r3

    R_r_new = project_to_so3(_rk4_left(R_r, omega_r, dt))
    R_r_new, repair = _cone_repair(R_r_new, delta)
    if repair > CONE_REPAIR_LIMIT:
        raise PlannerError(
            f"cone invariant violated: planar norm exceeded delta by {repair:g}")

    omega_dc = R_r.T @ (omega_c + omega_r)
    if state.omega_dc_prev is None:
        omega_dc_dot = np.zeros(3)
    else:
        omega_dc_dot = (omega_dc - state.omega_dc_prev) / dt

    output = PlannerOutput(
        R_dc=R_dc,
        omega_dc=omega_dc,
        omega_dc_dot=omega_dc_dot,
        R_c=R_c,
        psi_dc=nav_error(params.k_r_ref, R_dc @ R_d.T),
        projection_active=active,
        heading_fallback=fallback,
        cone_repair=repair,
    )
    new_state = PlannerState(R_r=R_r_new, R_c_prev=R_c, omega_dc_prev=omega_dc)
    return new_state, output
