"""Rigid-body dynamics under gravity and a body-frame control wrench, with a
rotation-preserving fixed-step RK4 integrator.

Equations of motion (body frame at the center of mass):

    x_dot = v
    R_dot = R hat(omega)
    m v_dot = -m g e3 + R f_c
    I omega_dot = -omega x I omega + tau_c

Translation evolves in the inertial frame, rotation in the body frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import E3, hat, project_to_so3

DEFAULT_GRAVITY = 9.81  # m/s^2, along -e3


@dataclass(frozen=True)
class RigidBodyParams:
    """Mass (kg), inertia matrix (kg m^2, SPD), gravity magnitude (m/s^2)."""

    mass: float
    inertia: np.ndarray
    gravity: float = DEFAULT_GRAVITY

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got {inertia.shape}")
        if np.abs(inertia - inertia.T).max() > 1e-12:
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(inertia).min() <= 0.0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(inertia))

    inertia_inv: np.ndarray = field(init=False, repr=False)


@dataclass
class RigidBodyState:
    """Position (m, inertial), rotation, inertial velocity (m/s), body
    angular velocity (rad/s)."""

    x: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(self.x.copy(), self.R.copy(), self.v.copy(), self.omega.copy())


@dataclass(frozen=True)
class Wrench:
    """Body-frame control force (N) and torque (N m)."""

    force: np.ndarray
    torque: np.ndarray


def state_derivative(params: RigidBodyParams, state: RigidBodyState, wrench: Wrench):
    """Returns (x_dot, omega, v_dot, omega_dot); omega is the body rate that
    drives R through R_dot = R hat(omega)."""
    v_dot = (state.R @ wrench.force) / params.mass - params.gravity * E3
    i_omega = params.inertia @ state.omega
    omega_dot = params.inertia_inv @ (np.cross(i_omega, state.omega) + wrench.torque)
    return state.v, state.omega, v_dot, omega_dot


def _derivative_raw(params, x, r, v, omega, force, torque):
    v_dot = (r @ force) / params.mass - params.gravity * E3
    i_omega = params.inertia @ omega
    omega_dot = params.inertia_inv @ (np.cross(i_omega, omega) + torque)
    return v, r @ hat(omega), v_dot, omega_dot


_COMPONENTS = ("position", "attitude", "velocity", "angular velocity")


def integrate_step(params: RigidBodyParams, state: RigidBodyState, wrench: Wrench,
                   dt: float) -> RigidBodyState:
    """One classical RK4 step with the wrench held constant (zero-order hold),
    followed by re-projection of R onto SO(3)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    f, tau = wrench.force, wrench.torque
    x0, r0, v0, w0 = state.x, state.R, state.v, state.omega

    k1 = _derivative_raw(params, x0, r0, v0, w0, f, tau)
    h2 = 0.5 * dt
    k2 = _derivative_raw(params, x0 + h2 * k1[0], r0 + h2 * k1[1],
                         v0 + h2 * k1[2], w0 + h2 * k1[3], f, tau)
    k3 = _derivative_raw(params, x0 + h2 * k2[0], r0 + h2 * k2[1],
                         v0 + h2 * k2[2], w0 + h2 * k2[3], f, tau)
    k4 = _derivative_raw(params, x0 + dt * k3[0], r0 + dt * k3[1],
                         v0 + dt * k3[2], w0 + dt * k3[3], f, tau)

    sixth = dt / 6.0
    x = x0 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    r = r0 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    v = v0 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    w = w0 + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

    for value, name in zip((x, r, v, w), _COMPONENTS):
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"integration diverged: non-finite {name}")
    return RigidBodyState(x=x, R=project_to_so3(r), v=v, omega=w)


def kinetic_energy_rotational(params: RigidBodyParams, state: RigidBodyState) -> float:
    return 0.5 * float(state.omega @ (params.inertia @ state.omega))


def angular_momentum_inertial(params: RigidBodyParams, state: RigidBodyState) -> np.ndarray:
    return state.R @ (params.inertia @ state.omega)
