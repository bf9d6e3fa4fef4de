"""Exponential-stability gain certification.

Reproduces the quadratic Lyapunov analysis of the closed loop: sandwich
matrices for the rotational and translational candidates, admissible cross
coefficients p1/p2, the dissipation matrices W_R/W_x and coupling W_Rx, the
combined condition lambda_min(W_x) > |W_Rx|^2 / (4 lambda_min(W_R)), and the
region-of-attraction bounds. The search over (p1, p2) is a dense grid; any
feasible pair certifies, the report carries the margin-maximizing one.

The P matrices here are the certificate forms including the 1/2 factors of
the candidates (V_R = 0.5 e_w' I e_w + Psi + p1 e_w' e_R and its
translational counterpart), so the sandwich inequality they express actually
holds; the W matrices follow the source analysis verbatim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .controller import ActuationLimits, ControlGains
from .dynamics import RigidBodyParams, RigidBodyState
from .geom import NavGains, attitude_error_vector, nav_error, psi_constants
from .planner import PlannerOutput
from .trajectory import TrajectoryCommand

GRID_RESOLUTION = 200


def sym_eig2(a: float, b: float, d: float) -> Tuple[float, float]:
    """Eigenvalues (min, max) of [[a, b], [b, d]], closed form."""
    mean = 0.5 * (a + d)
    disc = math.hypot(0.5 * (a - d), b)
    return mean - disc, mean + disc


@dataclass(frozen=True)
class CertificationInput:
    params: RigidBodyParams
    gains: ControlGains
    limits: ActuationLimits
    f_m_d: float       # worst-case reference force demand (N)
    f_c_m: float       # tracking-force budget (N), <= f_max - f_m_d

    def __post_init__(self):
        if self.f_c_m <= 0.0:
            raise ValueError("tracking-force budget f_c_m must be positive")
        if self.f_m_d >= self.limits.f_max:
            raise ValueError("reference force demand must stay below f_max")
        if self.f_c_m > self.limits.f_max - self.f_m_d + 1e-12:
            raise ValueError("need f_c_m <= f_max - f_m_d")


def p1_bound(params: RigidBodyParams, gains: ControlGains) -> float:
    """Admissible ceiling for the rotational cross coefficient p1."""
    consts = psi_constants(gains.k_r, gains.psi_sublevel)
    eig_i = np.linalg.eigvalsh(params.inertia)
    lm_i, lM_i = float(eig_i[0]), float(eig_i[-1])
    eig_w = np.linalg.eigvalsh(gains.k_omega)
    lm_w, lM_w = float(eig_w[0]), float(eig_w[-1])
    first = math.sqrt(consts.h1 * lm_i)
    denom = math.sqrt(2.0) * lM_w ** 2 * lM_i + 4.0 * gains.k_r.trace * lm_i ** 2
    second = 4.0 * math.sqrt(2.0) * lm_w * lm_i ** 2 / denom if denom > 0.0 else 0.0
    return min(first, second)


def p2_bound(params: RigidBodyParams, gains: ControlGains) -> float:
    """Admissible ceiling for the translational cross coefficient p2."""
    m = params.mass
    eig_x = np.linalg.eigvalsh(gains.k_x)
    eig_v = np.linalg.eigvalsh(gains.k_v)
    lm_x = float(eig_x[0])
    lm_v, lM_v = float(eig_v[0]), float(eig_v[-1])
    first = math.sqrt(m * lm_x)
    second = 4.0 * m * lm_v * lm_x / (4.0 * m * lm_x + lM_v ** 2)
    return min(first, second)


@dataclass(frozen=True)
class CertificateMatrices:
    P_R1: np.ndarray
    P_R2: np.ndarray
    P_x1: np.ndarray
    P_x2: np.ndarray
    W_R: np.ndarray
    W_x: np.ndarray
    W_Rx: np.ndarray
    alpha: float
    gamma: float
    w_rx_norm: float


def build_matrices(inp: CertificationInput, p1: float, p2: float) -> CertificateMatrices:
    """All certificate matrices for one (p1, p2) pair; validates the bounds."""
    b1, b2 = p1_bound(inp.params, inp.gains), p2_bound(inp.params, inp.gains)
    if not 0.0 < p1 < b1:
        raise ValueError(f"p1 = {p1:g} outside (0, {b1:g})")
    if not 0.0 < p2 < b2:
        raise ValueError(f"p2 = {p2:g} outside (0, {b2:g})")
    gains, params = inp.gains, inp.params
    consts = psi_constants(gains.k_r, gains.psi_sublevel)
    eig_i = np.linalg.eigvalsh(params.inertia)
    lm_i, lM_i = float(eig_i[0]), float(eig_i[-1])
    eig_w = np.linalg.eigvalsh(gains.k_omega)
    lm_w, lM_w = float(eig_w[0]), float(eig_w[-1])
    eig_x = np.linalg.eigvalsh(gains.k_x)
    eig_v = np.linalg.eigvalsh(gains.k_v)
    m = params.mass

    p_r1 = np.array([[consts.h1, -0.5 * p1], [-0.5 * p1, 0.5 * lm_i]])
    p_r2 = np.array([[consts.h2, 0.5 * p1], [0.5 * p1, 0.5 * lM_i]])
    p_x1 = np.array([[0.5 * float(eig_x[0]), -0.5 * p2], [-0.5 * p2, 0.5 * m]])
    p_x2 = np.array([[0.5 * float(eig_x[-1]), 0.5 * p2], [0.5 * p2, 0.5 * m]])

    w_r = np.array([
        [p1 / lM_i, -0.5 * p1 * lM_w / lm_i],
        [-0.5 * p1 * lM_w / lm_i, lm_w - p1 * gains.k_r.trace / math.sqrt(2.0)],
    ])
    w_x = np.array([
        [p2 / m * float(eig_x[0]), -0.5 * p2 / m * float(eig_v[-1])],
        [-0.5 * p2 / m * float(eig_v[-1]), float(eig_v[0]) - p2],
    ])
    gamma = 2.0 / gains.k_r.min
    alpha = math.sqrt((3.0 + 2.0 * gamma) * consts.h2 / gains.psi_max)
    f_m = inp.limits.f_max
    w_rx = np.array([[p2 / m * alpha * f_m, 0.0], [alpha * f_m, 0.0]])
    w_rx_norm = alpha * f_m * math.sqrt(1.0 + (p2 / m) ** 2)
    return CertificateMatrices(p_r1, p_r2, p_x1, p_x2, w_r, w_x, w_rx,
                               alpha, gamma, w_rx_norm)


@dataclass
class CertificationReport:
    """Every constant of the analysis plus the verdicts; serializable to JSON
    with the analysis symbol names."""

    c1: float
    c2: float
    c3: float
    h1: float
    h2: float
    psi: float
    psi_max: float
    alpha: float
    gamma: float
    f_max: float
    f_m_d: float
    f_c_m: float
    p1_max: float
    p2_max: float
    p1: float
    p2: float
    lambda_min_P_R1: float
    lambda_max_P_R2: float
    lambda_min_P_x1: float
    lambda_max_P_x2: float
    lambda_min_W_R: float
    lambda_min_W_x: float
    w_rx_norm: float
    lambda_min_W: float
    w_condition_ok: bool
    reg_R_bound: float
    reg_F_bound: float
    certified: bool
    failure_reason: str = ""
    grid_resolution: int = GRID_RESOLUTION

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, (bool, str, int)):
                out[key] = value
            else:
                out[key] = float(value)
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _grid(bound: float, n: int) -> np.ndarray:
    return bound * (np.arange(n) + 0.5) / n


def certify(inp: CertificationInput, grid_resolution: int = GRID_RESOLUTION) -> CertificationReport:
    """Grid-search (p1, p2) maximizing the lambda_min(W) margin.

    A failed search is a report outcome (certified = False, best margin
    recorded), not an error.
    """
    gains, params = inp.gains, inp.params
    consts = psi_constants(gains.k_r, gains.psi_sublevel)
    b1, b2 = p1_bound(params, gains), p2_bound(params, gains)

    eig_i = np.linalg.eigvalsh(params.inertia)
    lm_i, lM_i = float(eig_i[0]), float(eig_i[-1])
    eig_w = np.linalg.eigvalsh(gains.k_omega)
    lm_w, lM_w = float(eig_w[0]), float(eig_w[-1])
    eig_x = np.linalg.eigvalsh(gains.k_x)
    eig_v = np.linalg.eigvalsh(gains.k_v)
    m = params.mass
    gamma = 2.0 / gains.k_r.min
    alpha = math.sqrt((3.0 + 2.0 * gamma) * consts.h2 / gains.psi_max)
    f_m = inp.limits.f_max

    if b1 <= 0.0 or b2 <= 0.0:
        zero2 = np.zeros((2, 2))
        mats = CertificateMatrices(zero2, zero2, zero2, zero2, zero2, zero2, zero2,
                                   alpha, gamma, alpha * f_m)
        return _assemble_report(inp, consts, mats, b1, b2, 0.0, 0.0, -math.inf,
                                grid_resolution, "empty admissible range for p1/p2")

    p1s = _grid(b1, grid_resolution)
    p2s = _grid(b2, grid_resolution)

    # lambda_min(W_R)(p1), closed-form symmetric 2x2 eigenvalues, vectorized
    a_r = p1s / lM_i
    b_r = -0.5 * p1s * lM_w / lm_i
    d_r = lm_w - p1s * gains.k_r.trace / math.sqrt(2.0)
    lm_wr = 0.5 * (a_r + d_r) - np.hypot(0.5 * (a_r - d_r), b_r)

    a_x = p2s / m * float(eig_x[0])
    b_x = -0.5 * p2s / m * float(eig_v[-1])
    d_x = float(eig_v[0]) - p2s
    lm_wx = 0.5 * (a_x + d_x) - np.hypot(0.5 * (a_x - d_x), b_x)
    wrx = alpha * f_m * np.sqrt(1.0 + (p2s / m) ** 2)

    # lambda_min(W) on the (p1, p2) grid
    mean = 0.5 * (lm_wx[None, :] + lm_wr[:, None])
    disc = np.hypot(0.5 * (lm_wx[None, :] - lm_wr[:, None]), 0.5 * wrx[None, :])
    margin = mean - disc
    idx = np.unravel_index(int(np.argmax(margin)), margin.shape)
    p1, p2 = float(p1s[idx[0]]), float(p2s[idx[1]])
    best = float(margin[idx])

    mats = build_matrices(inp, p1, p2)
    return _assemble_report(inp, consts, mats, b1, b2, p1, p2, best, grid_resolution,
                            "" if best > 0.0 else "no (p1, p2) pair makes W positive definite")


def _assemble_report(inp, consts, mats, b1, b2, p1, p2, best_margin,
                     grid_resolution, failure_reason) -> CertificationReport:
    gains = inp.gains
    eig_x = np.linalg.eigvalsh(gains.k_x)
    eig_v = np.linalg.eigvalsh(gains.k_v)
    lm_pr1 = sym_eig2(mats.P_R1[0, 0], mats.P_R1[0, 1], mats.P_R1[1, 1])[0]
    lM_pr2 = sym_eig2(mats.P_R2[0, 0], mats.P_R2[0, 1], mats.P_R2[1, 1])[1]
    lm_px1 = sym_eig2(mats.P_x1[0, 0], mats.P_x1[0, 1], mats.P_x1[1, 1])[0]
    lM_px2 = sym_eig2(mats.P_x2[0, 0], mats.P_x2[0, 1], mats.P_x2[1, 1])[1]
    lm_wr = sym_eig2(mats.W_R[0, 0], mats.W_R[0, 1], mats.W_R[1, 1])[0]
    lm_wx = sym_eig2(mats.W_x[0, 0], mats.W_x[0, 1], mats.W_x[1, 1])[0]
    w_ok = bool(lm_wr > 0.0 and lm_wx > 0.0
                and lm_wx > mats.w_rx_norm ** 2 / (4.0 * lm_wr))
    denom = 2.0 * max(float(eig_x[-1]) ** 2, float(eig_v[-1]) ** 2)
    reg_f = lm_px1 * inp.f_c_m ** 2 / denom
    certified = bool(w_ok and best_margin > 0.0)
    return CertificationReport(
        c1=consts.c1, c2=consts.c2, c3=consts.c3, h1=consts.h1, h2=consts.h2,
        psi=gains.psi_sublevel, psi_max=gains.psi_max,
        alpha=mats.alpha, gamma=mats.gamma,
        f_max=inp.limits.f_max, f_m_d=inp.f_m_d, f_c_m=inp.f_c_m,
        p1_max=b1, p2_max=b2, p1=p1, p2=p2,
        lambda_min_P_R1=lm_pr1, lambda_max_P_R2=lM_pr2,
        lambda_min_P_x1=lm_px1, lambda_max_P_x2=lM_px2,
        lambda_min_W_R=lm_wr, lambda_min_W_x=lm_wx,
        w_rx_norm=mats.w_rx_norm, lambda_min_W=best_margin,
        w_condition_ok=w_ok,
        reg_R_bound=gains.psi_sublevel, reg_F_bound=reg_f,
        certified=certified, failure_reason=failure_reason,
        grid_resolution=grid_resolution,
    )


@dataclass(frozen=True)
class InitialConditionCheck:
    """Region-of-attraction membership of one initial condition.

    Errors are measured against the desired trajectory (e_omega = omega -
    omega_d, R_e = R R_d^T); reference-based diagnostics are reported
    alongside.
    """

    reg_R_value: float      # 0.5 e_w' I e_w + Psi(0), desired-based
    reg_R_bound: float
    reg_R_pass: bool
    v0: float               # V(0) = V_x(0) + V_R(0) with cross terms
    v_r0: float
    v_x0: float
    reg_F_bound: float
    reg_F_pass: bool
    psi0: float             # Psi vs the desired attitude
    psi0_ref: float         # Psi vs the planner reference attitude
    certified: bool


def check_initial_condition(report: CertificationReport, state0: RigidBodyState,
                            planner0: PlannerOutput, cmd0: TrajectoryCommand,
                            gains: ControlGains, params: RigidBodyParams) -> InitialConditionCheck:
    """Evaluate both region conditions for an initial state."""
    e_x = state0.x - cmd0.x_d
    e_v = state0.v - cmd0.v_d
    e_w = state0.omega - cmd0.omega_d
    r_e = state0.R @ cmd0.R_d.T
    psi0 = nav_error(gains.k_r, r_e)
    e_r = attitude_error_vector(gains.k_r, r_e)

    reg_r_value = 0.5 * float(e_w @ (params.inertia @ e_w)) + psi0
    v_r0 = reg_r_value + report.p1 * float(e_w @ e_r)
    v_x0 = (0.5 * params.mass * float(e_v @ e_v)
            + 0.5 * float(e_x @ (gains.k_x @ e_x))
            + report.p2 * float(e_x @ e_v))
    v0 = v_r0 + v_x0
    return InitialConditionCheck(
        reg_R_value=reg_r_value,
        reg_R_bound=report.reg_R_bound,
        reg_R_pass=bool(reg_r_value < report.reg_R_bound),
        v0=v0, v_r0=v_r0, v_x0=v_x0,
        reg_F_bound=report.reg_F_bound,
        reg_F_pass=bool(v0 < report.reg_F_bound),
        psi0=psi0,
        psi0_ref=nav_error(gains.k_r, state0.R @ planner0.R_dc.T),
        certified=report.certified,
    )
