"""Scenario evaluation: deterministic policy + LOS guidance on one vehicle.

Rolls the tanh-mean policy (no sampling) with an attitude schedule and a
waypoint path, on a possibly perturbed vehicle, recording per-control-step
metrics and a summary. Integral observation states evolve exactly as in
training (same clamping, same update order) so the policy sees in-distribution
inputs.
"""

from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np

from . import so3
from .config import ScenarioSpec
from .dynamics import GRAVITY, BatchParams, VehicleParams, batch_substep
from .env import RewardWeights  # noqa: F401  (re-export convenience for callers)
from .guidance import GuidanceState, WaypointPath, cross_track_error, los_world_velocity
from .nets import ActorCritic

METRICS_COLUMNS = (
    ["t_s"]
    + ["vd_x", "vd_y", "vd_z"]
    + ["v_x", "v_y", "v_z"]
    + ["ve_x", "ve_y", "ve_z"]
    + ["qd_w", "qd_x", "qd_y", "qd_z"]
    + ["q_w", "q_x", "q_y", "q_z"]
    + ["att_err_deg"]
    + ["w_x", "w_y", "w_z"]
    + ["a_u", "a_v", "a_w", "a_p", "a_q", "a_r"]
    + ["cross_track_m"]
    + ["p_n", "p_e", "p_d"]
    + ["segment"]
)

TRANSIENT_WINDOW_S = 3.0  # discarded after each reference discontinuity


def apply_perturbation(params: VehicleParams, scenario: ScenarioSpec) -> VehicleParams:
    """Vehicle with the scenario's payload change applied.

    The mass delta also adds its weight; the CM shift moves the body origin,
    so the CB offset shifts the opposite way. Inertia is left unchanged.
    """
    shift = np.asarray(scenario.cm_shift, dtype=float)
    return replace(
        params,
        mass=params.mass + scenario.mass_delta,
        weight=params.weight + scenario.mass_delta * GRAVITY,
        buoyancy=params.buoyancy + scenario.buoyancy_delta,
        r_cb=params.r_cb - shift,
    )


def _course_aligned_quat(v_world: np.ndarray) -> np.ndarray:
    """Attitude pointing body-x along the desired world velocity, zero roll."""
    n = np.linalg.norm(v_world)
    if n < 1e-9:
        return np.array([1.0, 0.0, 0.0, 0.0])
    d = v_world / n
    yaw = np.arctan2(d[1], d[0])
    pitch = -np.arcsin(np.clip(d[2], -1.0, 1.0))
    return so3.euler_to_quat(0.0, pitch, yaw)


def _draw_rpy(rng: np.random.Generator, scenario: ScenarioSpec) -> np.ndarray:
    return np.array(
        [
            rng.uniform(*scenario.roll_range),
            rng.uniform(*scenario.pitch_range),
            rng.uniform(*scenario.yaw_range),
        ]
    )


def run_scenario(
    ac: ActorCritic,
    base_params: VehicleParams,
    scenario: ScenarioSpec,
    dt_physics: float = 0.01,
    decimation: int = 2,
    z_max: float = 1.0,
):
    """Run one evaluation trial; returns (rows, summary).

    ``rows`` is a list of per-control-step records ordered as
    METRICS_COLUMNS; the summary is computed by summarize() on the same data.
    """
    params = apply_perturbation(base_params, scenario)
    bp = BatchParams.from_params([params])
    path = WaypointPath(
        scenario.waypoints,
        acceptance_radius=scenario.acceptance_radius,
        speed=scenario.speed,
        lookahead=scenario.lookahead,
    )
    gs = GuidanceState()
    att_rng = np.random.default_rng(scenario.attitude_seed)

    dt = dt_physics * decimation
    q = np.array([[1.0, 0.0, 0.0, 0.0]])
    v = np.zeros((1, 3))
    w = np.zeros((1, 3))
    p = scenario.waypoints[0].astype(float).copy()[None]
    z_v = np.zeros(3)
    z_q = np.zeros(3)

    rows = []
    t = 0.0
    n_steps = int(round(scenario.max_duration / dt))
    completed = False
    completion_time = None

    v_world, gs = los_world_velocity(p[0], path, gs)
    if scenario.attitude_mode == "fixed":
        q_d = so3.euler_to_quat(*scenario.fixed_rpy)
    elif scenario.attitude_mode == "random_per_waypoint":
        q_d = so3.euler_to_quat(*_draw_rpy(att_rng, scenario))
    else:
        q_d = _course_aligned_quat(v_world)
    v_d = so3.rotate_vector(so3.conjugate(q[0]), v_world)
    obs = np.concatenate([so3.quat_error(q_d, q[0]), v[0] - v_d, w[0], z_v, z_q])

    for _ in range(n_steps):
        action = np.asarray(ac.action_mean(obs.astype(ac.dtype)[None])[0], dtype=float)
        a_exec = np.clip(action, -1.0, 1.0)
        tau = (bp.gain * a_exec[None])
        for _ in range(decimation):
            batch_substep(bp, q, v, w, p, tau, dt_physics)
        t += dt

        prev_segment = gs.segment
        v_world, gs = los_world_velocity(p[0], path, gs)
        if gs.finished and not completed:
            completed = True
            completion_time = t
        switched = gs.segment != prev_segment
        if switched and scenario.attitude_mode == "random_per_waypoint":
            q_d = so3.euler_to_quat(*_draw_rpy(att_rng, scenario))
        if scenario.attitude_mode == "course_aligned" and not gs.finished:
            q_d = _course_aligned_quat(v_world)

        v_d = so3.rotate_vector(so3.conjugate(q[0]), v_world)
        q_e = so3.quat_error(q_d, q[0])
        v_e = v[0] - v_d
        z_v = np.clip(z_v + v_e * dt, -z_max, z_max)
        z_q = np.clip(z_q + q_e[1:] * dt, -z_max, z_max)
        obs = np.concatenate([q_e, v_e, w[0], z_v, z_q])

        att_err_deg = float(np.degrees(so3.quat_angle(q_d, q[0])))
        rows.append(
            [t]
            + list(v_d)
            + list(v[0])
            + list(v_e)
            + list(q_d)
            + list(q[0])
            + [att_err_deg]
            + list(w[0])
            + list(a_exec)
            + [cross_track_error(p[0], path, gs)]
            + list(p[0])
            + [float(gs.segment)]
        )
        if completed:
            break

    data = {name: np.array([r[i] for r in rows]) for i, name in enumerate(METRICS_COLUMNS)}
    summary = summarize(data, scenario.scenario_id, completed, completion_time)
    return rows, summary


def _discontinuity_times(data: dict) -> np.ndarray:
    """Reference discontinuities: run start plus every segment switch."""
    t = data["t_s"]
    seg = data["segment"]
    times = [0.0]
    if len(t) > 1:
        switches = np.where(np.diff(seg) != 0)[0]
        times.extend(t[i + 1] for i in switches)
    return np.asarray(times)


def summarize(data: dict, scenario_id: str, completed: bool, completion_time) -> dict:
    """Summary statistics of one run, recomputable from the metrics CSV alone.

    RMS velocity error and attitude-error statistics are taken over the
    post-transient steps: those at least TRANSIENT_WINDOW_S after the last
    reference discontinuity (start, waypoint switch, attitude setpoint
    change; the latter two coincide with segment changes).
    """
    t = data["t_s"]
    events = _discontinuity_times(data)
    last_event = np.array([events[events <= ti + 1e-12].max() for ti in t])
    steady = (t - last_event) >= TRANSIENT_WINDOW_S

    ve = np.stack([data["ve_x"], data["ve_y"], data["ve_z"]], axis=1)
    att = data["att_err_deg"]
    if np.any(steady):
        rms_ve = np.sqrt(np.mean(ve[steady] ** 2, axis=0))
        mean_att = float(np.mean(att[steady]))
        max_att = float(np.max(att[steady]))
    else:
        rms_ve = np.full(3, np.nan)
        mean_att = max_att = float("nan")

    seg = data["segment"]
    att_at_switch = []
    if len(t) > 1:
        for i in np.where(np.diff(seg) != 0)[0]:
            att_at_switch.append(float(att[i]))

    return {
        "scenario_id": scenario_id,
        "completed": bool(completed),
        "completion_time_s": completion_time,
        "duration_s": float(t[-1]) if len(t) else 0.0,
        "transient_window_s": TRANSIENT_WINDOW_S,
        "post_transient_steps": int(np.count_nonzero(steady)),
        "rms_ve_ms": [float(x) for x in rms_ve],
        "mean_att_err_deg": mean_att,
        "max_att_err_deg": max_att,
        "att_err_at_switch_deg": att_at_switch,
        "max_cross_track_m": float(np.max(data["cross_track_m"])) if len(t) else float("nan"),
    }


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])


def read_metrics_csv(path) -> dict:
    """Load a metrics CSV back into column arrays; strict about the schema."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty metrics file") from None
        if header != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected column schema")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_COLUMNS):
                raise ValueError(f"{path}: row at line {lineno} has {len(row)} fields, expected {len(METRICS_COLUMNS)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ValueError(f"{path}: row at line {lineno} has a non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows)
    data = {name: arr[:, i] for i, name in enumerate(METRICS_COLUMNS)}
    if np.any(np.diff(data["t_s"]) <= 0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    return data
