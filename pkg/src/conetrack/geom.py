"""SO(3) kernel: hat/vee isomorphisms, exponential/logarithm, orthonormal
projection, and the navigation error function with its derived quantities.

Conventions: rotation matrices map body coordinates to inertial coordinates,
``R^T R = I``, ``det R = +1``. Angular velocities are body-frame unless noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

ROTATION_TOL = 1e-9        # validation tolerance for rotation matrices
PROJECTION_TOL = 1e-12     # orthonormality guaranteed after project_to_so3
_SMALL_ANGLE = 1e-6        # series switch for exp/log near the identity


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of ``v``, so that ``hat(v) @ w == cross(v, w)``."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Inverse of :func:`hat`. Rejects matrices that are not skew-symmetric."""
    if np.abs(m + m.T).max() > tol:
        raise ValueError(f"matrix is not skew-symmetric within {tol:g}")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def skew_part_vee(m: np.ndarray) -> np.ndarray:
    """``vee((m - m^T)/2)`` without the skewness check."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Rotation by angle ``|v|`` about ``v``, Rodrigues closed form.

    Falls back to the quadratic Taylor series of the coefficients below
    1e-6 rad, where sin(t)/t loses accuracy to cancellation.
    """
    v = np.asarray(v, dtype=float)
    theta2 = float(v @ v)
    k = hat(v)
    if theta2 < _SMALL_ANGLE * _SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * k + b * (k @ k)


def log_so3(r: np.ndarray) -> np.ndarray:
    """Rotation vector of ``r`` with angle in [0, pi].

    Near pi the rotation axis is recovered from the dominant column of
    ``r + I`` (the axis spans its column space), which stays well conditioned
    where the antisymmetric part vanishes.
    """
    tr = float(np.trace(r))
    cos_theta = max(-1.0, min(1.0, 0.5 * (tr - 1.0)))
    theta = math.acos(cos_theta)
    if theta < _SMALL_ANGLE:
        return skew_part_vee(r)
    if math.pi - theta > 1e-4:
        return skew_part_vee(r) * (theta / math.sin(theta))
    # axis from r + I: columns are proportional to the axis near theta = pi
    m = r + np.eye(3)
    col = m[:, int(np.argmax(np.diag(m)))]
    axis = col / np.linalg.norm(col)
    # fix the sign with the (possibly tiny) antisymmetric part
    w = skew_part_vee(r)
    if w @ axis < 0.0:
        axis = -axis
    return theta * axis


def is_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    return (
        np.linalg.norm(r.T @ r - np.eye(3)) <= tol
        and abs(np.linalg.det(r) - 1.0) <= tol
    )


def require_rotation(r: np.ndarray, tol: float = ROTATION_TOL, what: str = "matrix") -> None:
    if not is_rotation(r, tol):
        raise ValueError(f"{what} is not a rotation matrix within {tol:g}")


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``m`` (orthogonal Procrustes / polar factor).

    ``det(m) <= 0`` is rejected: there is no nearby rotation. Near-orthonormal
    inputs take a Newton-Schulz path (quadratic convergence, two matmuls per
    sweep); anything else falls back to the SVD construction.
    """
    d = float(np.linalg.det(m))
    if d <= 0.0:
        raise ValueError(f"cannot project to SO(3): det = {d:g} <= 0")
    drift = np.abs(m.T @ m - np.eye(3)).max()
    if drift < 0.1:
        r = m
        while drift > 1e-15:
            r = r @ (1.5 * np.eye(3) - 0.5 * (r.T @ r))
            new_drift = np.abs(r.T @ r - np.eye(3)).max()
            if new_drift >= drift:
                break
            drift = new_drift
        return r
    u, _, vt = np.linalg.svd(m)
    s = np.diag([1.0, 1.0, float(np.linalg.det(u @ vt))])
    return u @ s @ vt


@dataclass(frozen=True)
class NavGains:
    """Diagonal attitude gain (entries of K_R, each strictly positive)."""

    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0 and self.k3 > 0):
            raise ValueError("attitude gains must be strictly positive")

    @classmethod
    def isotropic(cls, k: float) -> "NavGains":
        return cls(k, k, k)

    @property
    def diag(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3])

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    @property
    def trace(self) -> float:
        return self.k1 + self.k2 + self.k3

    @property
    def min(self) -> float:
        return min(self.k1, self.k2, self.k3)

    def scaled(self, factor: float) -> "NavGains":
        return NavGains(factor * self.k1, factor * self.k2, factor * self.k3)


def nav_error(gains: NavGains, r_e: np.ndarray) -> float:
    """Navigation error function ``0.5 * tr(K_R (I - R_e))``."""
    k = gains.diag
    return 0.5 * float(k @ (1.0 - np.diag(r_e)))


def attitude_error_vector(gains: NavGains, r_e: np.ndarray) -> np.ndarray:
    """Attitude error ``vee(skew(K_R R_e))``; zero exactly at the four
    critical points of the navigation error for diagonal gains."""
    return skew_part_vee(gains.diag[:, None] * r_e)


def error_transport_matrix(gains: NavGains, r_e: np.ndarray, r_d: np.ndarray) -> np.ndarray:
    """Matrix E with ``d(e_R)/dt = E @ e_omega``; operator norm is bounded by
    ``tr(K_R)/sqrt(2)``."""
    k_re = gains.diag[:, None] * r_e
    return 0.5 * ((np.trace(k_re)) * np.eye(3) - k_re.T) @ r_d


@dataclass(frozen=True)
class PsiConstants:
    """Quadratic-bound constants of the navigation error on a sublevel set."""

    c1: float
    c2: float
    c3: float
    h1: float
    h2: float
    psi: float


def psi_constants(gains: NavGains, psi: float) -> PsiConstants:
    """Constants for ``h1 |e_R|^2 <= Psi <= h2 |e_R|^2`` on ``{Psi < psi}``.

    Requires ``0 < psi < c1``; the upper quadratic bound degenerates at the
    sublevel boundary otherwise.
    """
    k1, k2, k3 = gains.k1, gains.k2, gains.k3
    pair_sums = (k1 + k2, k2 + k3, k3 + k1)
    c1 = min(pair_sums)
    c3 = max(pair_sums)
    c2 = max((k1 - k2) ** 2, (k2 - k3) ** 2, (k3 - k1) ** 2)
    if not 0.0 < psi < c1:
        raise ValueError(f"psi must lie in (0, c1) = (0, {c1:g}); got {psi:g}")
    h1 = c1 / (c2 + c3 ** 2)
    h2 = c3 / (c1 * (c1 - psi))
    return PsiConstants(c1=c1, c2=c2, c3=c3, h1=h1, h2=h2, psi=psi)
