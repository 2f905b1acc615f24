"""Run and scenario configuration: JSON files with a strict schema.

Unknown keys are rejected with their dotted location, units are explicit in
key names, and every field has a default, so an empty object is a valid
config. The fully-resolved dictionary is what gets snapshotted next to run
artifacts; its canonical JSON hash ties checkpoints to the settings that
produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import GRAVITY, VehicleParams
from .env import EnvConfig, RandomizationSpec, RewardWeights
from .ppo import PpoConfig
from .references import TrajectoryParams


class ConfigError(ValueError):
    """Schema violation; message carries the dotted key path."""


def default_config() -> dict:
    """The fully-resolved default run configuration (derived from the
    dataclass defaults, so the two can never drift apart)."""
    env = EnvConfig(n_envs=2048)
    w = env.weights
    r = env.randomization
    tp = env.trajectory
    ppo = PpoConfig()
    return {
        "seed": 0,
        "vehicle": VehicleParams.default().to_dict(),
        "env": {
            "n_envs": env.n_envs,
            "dt_physics_s": env.dt_physics,
            "control_decimation": env.decimation,
            "episode_s": env.episode_s,
            "reward_weights": {
                "attitude": w.attitude,
                "angular_rate": w.angular_rate,
                "velocity": w.velocity,
                "action": w.action,
            },
            "randomization": {
                "mass_factor": list(r.mass_factor),
                "buoyancy_factor": list(r.buoyancy_factor),
                "cb_offset_radius_m": r.cb_offset_radius,
            },
            "integral_clamp": env.z_max,
            "velocity_limit": env.nu_max,
            "reference": {
                "speed_ms": env.ref_speed,
                "traj_coeffs_ms": [tp.a, tp.b, tp.c],
                "traj_freq_rads": tp.omega,
            },
            "stagger_initial": env.stagger_initial,
            "workers": 1,
        },
        "ppo": {
            "gamma": ppo.gamma,
            "gae_lambda": ppo.lam,
            "clip_ratio": ppo.clip_ratio,
            "learning_rate": ppo.learning_rate,
            "lr_schedule": ppo.lr_schedule,
            "desired_kl": ppo.desired_kl,
            "epochs": ppo.epochs,
            "minibatches": ppo.minibatches,
            "horizon": ppo.horizon,
            "entropy_coef": ppo.entropy_coef,
            "value_coef": ppo.value_coef,
            "max_grad_norm": ppo.max_grad_norm,
            "iterations": ppo.iterations,
            "hidden": list(ppo.hidden),
            "checkpoint_every": ppo.checkpoint_every,
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    """Deep-merge override onto base, rejecting keys base does not know."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def apply_overrides(resolved: dict, overrides) -> dict:
    """Apply ``key.path=value`` command-line overrides onto a resolved config."""
    out = copy.deepcopy(resolved)
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override '{item}' must look like key.path=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown key: {key}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown key: {key}")
        node[parts[-1]] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    """Typed view of a resolved configuration dictionary."""

    seed: int
    vehicle: VehicleParams
    env: EnvConfig
    ppo: PpoConfig
    workers: int
    resolved: dict

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)


def config_hash(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def parse_run_config(d: dict) -> RunConfig:
    resolved = _merge(default_config(), d)
    e = resolved["env"]
    r = e["reference"]
    coeffs = r["traj_coeffs_ms"]
    if not (isinstance(coeffs, (list, tuple)) and len(coeffs) == 3):
        raise ConfigError("env.reference.traj_coeffs_ms: expected 3 values")
    try:
        vehicle = VehicleParams.from_dict(resolved["vehicle"])
    except (ValueError, KeyError) as err:
        raise ConfigError(f"vehicle: {err}") from err
    try:
        env_cfg = EnvConfig(
            n_envs=int(e["n_envs"]),
            dt_physics=float(e["dt_physics_s"]),
            decimation=int(e["control_decimation"]),
            episode_s=float(e["episode_s"]),
            weights=RewardWeights(**{k: float(v) for k, v in e["reward_weights"].items()}),
            randomization=RandomizationSpec(
                mass_factor=tuple(e["randomization"]["mass_factor"]),
                buoyancy_factor=tuple(e["randomization"]["buoyancy_factor"]),
                cb_offset_radius=float(e["randomization"]["cb_offset_radius_m"]),
            ),
            z_max=float(e["integral_clamp"]),
            nu_max=float(e["velocity_limit"]),
            ref_speed=float(r["speed_ms"]),
            trajectory=TrajectoryParams(
                a=float(coeffs[0]), b=float(coeffs[1]), c=float(coeffs[2]),
                omega=float(r["traj_freq_rads"]),
            ),
            stagger_initial=bool(e["stagger_initial"]),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"env: {err}") from err
    p = resolved["ppo"]
    try:
        ppo_cfg = PpoConfig(
            gamma=float(p["gamma"]),
            lam=float(p["gae_lambda"]),
            clip_ratio=float(p["clip_ratio"]),
            learning_rate=float(p["learning_rate"]),
            lr_schedule=str(p["lr_schedule"]),
            desired_kl=float(p["desired_kl"]),
            epochs=int(p["epochs"]),
            minibatches=int(p["minibatches"]),
            horizon=int(p["horizon"]),
            entropy_coef=float(p["entropy_coef"]),
            value_coef=float(p["value_coef"]),
            max_grad_norm=float(p["max_grad_norm"]),
            iterations=int(p["iterations"]),
            hidden=tuple(int(h) for h in p["hidden"]),
            checkpoint_every=int(p["checkpoint_every"]),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"ppo: {err}") from err
    return RunConfig(
        seed=int(resolved["seed"]),
        vehicle=vehicle,
        env=env_cfg,
        ppo=ppo_cfg,
        workers=int(e["workers"]),
        resolved=resolved,
    )


def load_run_config(path, overrides=None) -> RunConfig:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    resolved = _merge(default_config(), raw)
    if overrides:
        resolved = apply_overrides(resolved, overrides)
    return parse_run_config(resolved)


# ----------------------------------------------------------------------
# Scenario files
# ----------------------------------------------------------------------

ATTITUDE_MODES = ("course_aligned", "fixed", "random_per_waypoint")


@dataclass(frozen=True)
class ScenarioSpec:
    """One evaluation trial: path, attitude schedule, vehicle perturbation."""

    scenario_id: str
    waypoints: np.ndarray
    acceptance_radius: float
    speed: float
    lookahead: float
    attitude_mode: str
    fixed_rpy: tuple
    attitude_seed: int
    roll_range: tuple
    pitch_range: tuple
    yaw_range: tuple
    mass_delta: float
    buoyancy_delta: float
    cm_shift: tuple
    max_duration: float

    def __post_init__(self):
        if self.attitude_mode not in ATTITUDE_MODES:
            raise ConfigError(f"attitude mode must be one of {ATTITUDE_MODES}")
        if self.max_duration <= 0.0:
            raise ConfigError("max_duration_s must be positive")
        for name in ("roll_range", "pitch_range", "yaw_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} must be ordered")


_SCENARIO_DEFAULTS = {
    "id": "scenario",
    "path": {
        "waypoints_m": [[0.0, 0.0, 1.5], [4.0, 0.0, 1.5]],
        "acceptance_radius_m": 0.3,
        "speed_ms": 0.5,
        "lookahead_m": 1.0,
    },
    "attitude": {
        "mode": "course_aligned",
        "rpy_rad": [0.0, 0.0, 0.0],
        "seed": 0,
        "roll_range_rad": [-np.pi / 2, np.pi / 2],
        "pitch_range_rad": [-np.pi / 2, np.pi / 2],
        "yaw_range_rad": [-np.pi, np.pi],
    },
    "perturbation": {
        "mass_delta_kg": 0.0,
        "buoyancy_delta_n": 0.0,
        "cm_shift_m": [0.0, 0.0, 0.0],
    },
    "max_duration_s": 60.0,
}


def parse_scenario(d: dict) -> ScenarioSpec:
    resolved = _merge(_SCENARIO_DEFAULTS, d)
    path = resolved["path"]
    att = resolved["attitude"]
    pert = resolved["perturbation"]
    return ScenarioSpec(
        scenario_id=str(resolved["id"]),
        waypoints=np.asarray(path["waypoints_m"], dtype=float),
        acceptance_radius=float(path["acceptance_radius_m"]),
        speed=float(path["speed_ms"]),
        lookahead=float(path["lookahead_m"]),
        attitude_mode=str(att["mode"]),
        fixed_rpy=tuple(float(x) for x in att["rpy_rad"]),
        attitude_seed=int(att["seed"]),
        roll_range=tuple(float(x) for x in att["roll_range_rad"]),
        pitch_range=tuple(float(x) for x in att["pitch_range_rad"]),
        yaw_range=tuple(float(x) for x in att["yaw_range_rad"]),
        mass_delta=float(pert["mass_delta_kg"]),
        buoyancy_delta=float(pert["buoyancy_delta_n"]),
        cm_shift=tuple(float(x) for x in pert["cm_shift_m"]),
        max_duration=float(resolved["max_duration_s"]),
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_scenario(raw)


def ballast_deltas(vehicle: VehicleParams, mass_increase_fraction: float = 0.05):
    """Deltas realizing the ballast trial on a given vehicle.

    Adds the given mass fraction and lowers buoyancy to 99% of the new
    weight, turning slightly positive trim into slightly negative.
    """
    mass_delta = vehicle.mass * mass_increase_fraction
    new_weight = vehicle.weight + mass_delta * GRAVITY
    buoyancy_delta = 0.99 * new_weight - vehicle.buoyancy
    return mass_delta, buoyancy_delta
