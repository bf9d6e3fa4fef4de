"""Closed-loop harness: trajectory -> planner -> controller -> dynamics, with
per-step telemetry, Lyapunov monitoring, CSV output, and a machine-readable
run summary.

The loop is single-rate: controller, planner and dynamics all advance with
the same dt, the wrench is held over each step. Runs are deterministic:
identical configs produce byte-identical CSV files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certify import CertificationInput, CertificationReport, InitialConditionCheck, certify, check_initial_condition
from .config import ScenarioConfig
from .controller import (ControlError, cone_margin, control_torque, desired_force,
                         feasibility_check, scaling)
from .dynamics import RigidBodyState, Wrench, integrate_step
from .geom import E3, attitude_error_vector, nav_error
from .planner import PlannerError, PlannerState, planner_step
from .trajectory import sample

#: CSV column contract, in order.
CSV_COLUMNS = (
    ["t"]
    + [f"x_{i}" for i in (1, 2, 3)]
    + [f"v_{i}" for i in (1, 2, 3)]
    + [f"omega_{i}" for i in (1, 2, 3)]
    + [f"R_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
    + [f"xd_{i}" for i in (1, 2, 3)]
    + [f"Rdc_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
    + ["e_x_norm", "e_v_norm", "e_R_norm", "e_omega_norm",
       "psi_d", "psi_dc", "psi", "c_scale", "cos_theta_d", "cos_theta",
       "f_c_norm", "e_f_1", "e_f_2", "e_f_3", "alpha_tilt", "alpha_tilt_d",
       "V_R", "V_x", "V", "proj_active"]
)

#: Additional in-memory arrays kept for analysis (not part of the CSV contract).
AUX_COLUMNS = (
    [f"vd_{i}" for i in (1, 2, 3)]
    + [f"omegad_{i}" for i in (1, 2, 3)]
    + [f"omegadc_{i}" for i in (1, 2, 3)]
    + [f"e_R_{i}" for i in (1, 2, 3)]
    + [f"f_c_{i}" for i in (1, 2, 3)]
    + [f"omega_r_{i}" for i in (1, 2, 3)]
    + [f"omega_r_d_{i}" for i in (1, 2, 3)]
    + ["b_p_norm", "f_boundary", "cone_repair", "heading_fallback"]
)


class SimulationAbort(RuntimeError):
    """A controller/planner error at a specific time aborts the run."""

    def __init__(self, t: float, component: str, cause: Exception):
        super().__init__(f"aborted at t = {t:.6f} s in {component}: {cause}")
        self.t = t
        self.component = component
        self.cause = cause


@dataclass
class Telemetry:
    """Column-oriented record of one run; ``data`` holds the CSV contract
    columns plus the auxiliary analysis arrays."""

    data: dict
    n: int
    dt: float

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.data[name] for name in CSV_COLUMNS])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]


@dataclass
class RunSummary:
    final_e_x_norm: float
    max_f_c_norm: float
    min_cos_theta: float
    max_psi: float
    settled_time: Optional[float]
    settle_threshold: float
    lyapunov_violations: int
    force_limit_exceeded_steps: int
    max_cone_repair: float
    reg_R_pass: bool
    reg_F_pass: bool
    psi0: float
    reg_R_value: float
    v0: float
    certified: bool
    n_steps: int
    dt: float
    t_final: float

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            if value is None or isinstance(value, (bool, int, str)):
                out[key] = value
            else:
                out[key] = float(value)
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def run_scenario(cfg: ScenarioConfig):
    """Run the closed loop; returns (Telemetry, RunSummary).

    Controller and planner errors abort with the offending time and
    component via :class:`SimulationAbort`.
    """
    params, gains, planner_params = cfg.params, cfg.gains, cfg.planner
    dt = cfg.run.dt
    n = int(round(cfg.run.t_final / dt))
    k_r = gains.k_r
    inertia = params.inertia
    k_x = gains.k_x
    mass = params.mass

    cmd0 = sample(cfg.trajectory, 0.0)
    state = RigidBodyState(
        x=cfg.initial.position.copy(),
        R=cfg.initial.rotation(cmd0.R_d),
        v=cfg.initial.velocity.copy(),
        omega=cfg.initial.omega.copy(),
    )
    planner_state = PlannerState.initial()

    cols = {name: np.empty(n) for name in list(CSV_COLUMNS) + list(AUX_COLUMNS)}
    first_planner_output = None

    for k in range(n):
        t = k * dt
        cmd = sample(cfg.trajectory, t)
        e_x = state.x - cmd.x_d
        e_v = state.v - cmd.v_d
        f_c_d = desired_force(gains, params, e_x, e_v, cmd.a_d)

        try:
            planner_state, ref = planner_step(planner_state, f_c_d, cmd,
                                              planner_params, dt)
        except PlannerError as exc:
            raise SimulationAbort(t, "planner", exc) from exc
        if first_planner_output is None:
            first_planner_output = ref

        r_dc = ref.R_dc
        psi = nav_error(k_r, state.R @ r_dc.T)
        try:
            c = scaling(psi, gains.psi_max)
        except ControlError as exc:
            raise SimulationAbort(t, "controller", exc) from exc
        f_c = c * (r_dc.T @ f_c_d)
        tau = control_torque(gains, params, state.R, state.omega, r_dc,
                             ref.omega_dc, ref.omega_dc_dot)

        e_r = attitude_error_vector(k_r, state.R @ r_dc.T)
        e_w = state.omega - ref.omega_dc
        f_c_norm = float(np.linalg.norm(f_c))
        norm_fcd = float(np.linalg.norm(f_c_d))
        cos_theta = cone_margin(f_c) if f_c_norm > 0.0 else 1.0
        cos_theta_d = float(f_c_d @ (r_dc @ E3)) / norm_fcd if norm_fcd > 0.0 else 1.0
        e_f = f_c_d - state.R @ f_c
        v_r = 0.5 * float(e_w @ (inertia @ e_w)) + psi
        v_x = 0.5 * mass * float(e_v @ e_v) + 0.5 * float(e_x @ (k_x @ e_x))

        row = cols
        row["t"][k] = t
        for i in range(3):
            row[f"x_{i+1}"][k] = state.x[i]
            row[f"v_{i+1}"][k] = state.v[i]
            row[f"omega_{i+1}"][k] = state.omega[i]
            row[f"xd_{i+1}"][k] = cmd.x_d[i]
            row[f"e_f_{i+1}"][k] = e_f[i]
            row[f"vd_{i+1}"][k] = cmd.v_d[i]
            row[f"omegad_{i+1}"][k] = cmd.omega_d[i]
            row[f"omegadc_{i+1}"][k] = ref.omega_dc[i]
            row[f"e_R_{i+1}"][k] = e_r[i]
            row[f"f_c_{i+1}"][k] = f_c[i]
            for j in range(3):
                row[f"R_{i+1}{j+1}"][k] = state.R[i, j]
                row[f"Rdc_{i+1}{j+1}"][k] = r_dc[i, j]
        row["e_x_norm"][k] = float(np.linalg.norm(e_x))
        row["e_v_norm"][k] = float(np.linalg.norm(e_v))
        row["e_R_norm"][k] = float(np.linalg.norm(e_r))
        row["e_omega_norm"][k] = float(np.linalg.norm(e_w))
        row["psi_d"][k] = nav_error(k_r, state.R @ cmd.R_d.T)
        row["psi_dc"][k] = ref.psi_dc
        row["psi"][k] = psi
        row["c_scale"][k] = c
        row["cos_theta_d"][k] = cos_theta_d
        row["cos_theta"][k] = cos_theta
        row["f_c_norm"][k] = f_c_norm
        row["alpha_tilt"][k] = math.acos(max(-1.0, min(1.0, float(state.R[2, 2]))))
        row["alpha_tilt_d"][k] = math.acos(max(-1.0, min(1.0, float(cmd.R_d[2, 2]))))
        row["V_R"][k] = v_r
        row["V_x"][k] = v_x
        row["V"][k] = v_r + v_x
        row["proj_active"][k] = 1.0 if ref.projection_active else 0.0
        b_r3 = planner_state.R_r[:, 2]
        row["b_p_norm"][k] = math.hypot(float(b_r3[0]), float(b_r3[1]))
        delta = planner_params.delta
        if delta > 0.0:
            prev_b = ref.R_c.T @ (r_dc @ E3)  # = R_r e3 before the step
            nsq = float(prev_b[0] ** 2 + prev_b[1] ** 2)
            eps = planner_params.epsilon
            row["f_boundary"][k] = ((1.0 + eps) * nsq - delta * delta) / (eps * delta * delta)
        else:
            row["f_boundary"][k] = math.inf
        row["cone_repair"][k] = ref.cone_repair
        row["heading_fallback"][k] = 1.0 if ref.heading_fallback else 0.0

        for i in range(3):
            row[f"omega_r_{i+1}"][k] = math.nan
            row[f"omega_r_d_{i+1}"][k] = math.nan

        try:
            state = integrate_step(params, state, Wrench(force=f_c, torque=tau), dt)
        except FloatingPointError as exc:
            raise SimulationAbort(t, "dynamics", exc) from exc

    telemetry = Telemetry(data=cols, n=n, dt=dt)
    summary = _summarize(cfg, telemetry, first_planner_output, cmd0, state)
    return telemetry, summary


def _summarize(cfg: ScenarioConfig, telemetry: Telemetry, planner0, cmd0,
               final_state: RigidBodyState) -> RunSummary:
    d = telemetry.data
    threshold = cfg.run.settle_threshold
    e_x = d["e_x_norm"]
    settled: Optional[float] = None
    above = np.nonzero(e_x >= threshold)[0]
    if above.size == 0:
        settled = 0.0
    elif above[-1] + 1 < telemetry.n:
        settled = float(d["t"][above[-1] + 1])

    monitor = lyapunov_monitor(telemetry)

    horizon = min(cfg.run.t_final, 2.0 * math.pi / getattr(cfg.trajectory, "rate", 1.0)
                  if hasattr(cfg.trajectory, "rate") else cfg.run.t_final)
    feas = feasibility_check(cfg.trajectory, cfg.limits, cfg.params,
                             horizon=horizon, dt=min(1e-2, cfg.run.dt * 10))
    f_c_m = max(cfg.limits.f_max - feas.f_m_d, 1e-9)
    report = certify(CertificationInput(params=cfg.params, gains=cfg.gains,
                                        limits=cfg.limits, f_m_d=min(feas.f_m_d,
                                                                     cfg.limits.f_max - f_c_m),
                                        f_c_m=f_c_m))
    state0 = RigidBodyState(x=cfg.initial.position.copy(),
                            R=cfg.initial.rotation(cmd0.R_d),
                            v=cfg.initial.velocity.copy(),
                            omega=cfg.initial.omega.copy())
    check = check_initial_condition(report, state0, planner0, cmd0,
                                    cfg.gains, cfg.params)

    return RunSummary(
        final_e_x_norm=float(e_x[-1]),
        max_f_c_norm=float(d["f_c_norm"].max()),
        min_cos_theta=float(d["cos_theta"].min()),
        max_psi=float(d["psi"].max()),
        settled_time=settled,
        settle_threshold=threshold,
        lyapunov_violations=monitor.violation_count,
        force_limit_exceeded_steps=int(np.count_nonzero(d["f_c_norm"] > cfg.limits.f_max)),
        max_cone_repair=float(d["cone_repair"].max()),
        reg_R_pass=check.reg_R_pass,
        reg_F_pass=check.reg_F_pass,
        psi0=check.psi0,
        reg_R_value=check.reg_R_value,
        v0=check.v0,
        certified=report.certified,
        n_steps=telemetry.n,
        dt=telemetry.dt,
        t_final=cfg.run.t_final,
    )


@dataclass
class MonitorResult:
    applicable: bool
    violation_count: int
    violation_times: np.ndarray
    max_increase: float
    tol: float
    fitted_decay_rate: Optional[float]
    certified_rate_bound: Optional[float]
    decay_rate_ok: Optional[bool]


def lyapunov_monitor(telemetry: Telemetry, report: Optional[CertificationReport] = None,
                     tol_v: float = 1e-8) -> MonitorResult:
    """Flag steps where the rotational candidate V_R increases by more than
    ``tol_v``; optionally fit the decay rate of the full candidate (cross
    terms from a certified report) and compare to the certified bound."""
    d = telemetry.data
    if "V_R" not in d:
        return MonitorResult(False, 0, np.empty(0), 0.0, tol_v, None, None, None)
    v_r = d["V_R"]
    dv = np.diff(v_r)
    bad = np.nonzero(dv > tol_v)[0]
    max_inc = float(dv.max()) if dv.size else 0.0

    fitted = bound = ok = None
    if report is not None and report.certified:
        e_w_dot_e_r = sum(( d[f"omega_{i}"] - d[f"omegadc_{i}"]) * d[f"e_R_{i}"]
                         for i in (1, 2, 3))
        e_x_dot_e_v = sum((d[f"x_{i}"] - d[f"xd_{i}"]) * (d[f"v_{i}"] - d[f"vd_{i}"])
                          for i in (1, 2, 3))
        v_full = d["V"] + report.p1 * e_w_dot_e_r + report.p2 * e_x_dot_e_v
        v0 = float(v_full[0])
        if v0 > 0.0:
            floor = max(v0 * 1e-6, 1e-300)
            below = np.nonzero(v_full <= floor)[0]
            end = int(below[0]) if below.size else telemetry.n
            end = max(end, 10)
            seg = v_full[:end]
            tseg = d["t"][:end]
            good = seg > 0.0
            if np.count_nonzero(good) >= 10:
                slope = np.polyfit(tseg[good], np.log(seg[good]), 1)[0]
                fitted = -float(slope)
                p2_max_eig = max(report.lambda_max_P_R2, report.lambda_max_P_x2)
                bound = report.lambda_min_W / p2_max_eig
                ok = bool(fitted >= bound)
    return MonitorResult(True, int(bad.size), d["t"][bad + 1] if bad.size else np.empty(0),
                         max_inc, tol_v, fitted, bound, ok)


def write_csv(telemetry: Telemetry, path) -> None:
    """Write the contract columns with 17-significant-digit decimal formatting
    (lossless float64 round trip)."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            if telemetry.n:
                np.savetxt(fh, telemetry.matrix(), delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise OSError(f"cannot write telemetry CSV to {path}: {exc}") from exc


def read_csv(path) -> Telemetry:
    """Read back a telemetry CSV (contract columns only)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected telemetry header in {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = {name: data[:, i] if data.size else np.empty(0)
            for i, name in enumerate(CSV_COLUMNS)}
    n = data.shape[0] if data.size else 0
    dt = float(cols["t"][1] - cols["t"][0]) if n > 1 else 0.0
    return Telemetry(data=cols, n=n, dt=dt)
