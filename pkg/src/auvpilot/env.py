"""Vectorized training environment: N independent vehicles stepped in lockstep.

Each environment owns a randomized vehicle, a constant velocity reference, a
Frenet attitude reference, integral error accumulators and an episode clock.
The 16-dimensional observation is

    [q_e (4, w >= 0), v_e (3), omega (3), z_v (3), z_q (3)]

and the reward is the four-term weighted sum of exponentials over velocity
error, angular rate, geodesic attitude error and action magnitude.

All per-environment state lives in struct-of-arrays form; a step is a handful
of vectorized array operations, so a 2048-environment batch advances at a few
hundred thousand environment steps per second on a desktop CPU. Stepping can
be partitioned across worker slices without changing results bit-for-bit:
every array operation is elementwise per environment and each environment
samples only from its own counter-seeded stream.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .dynamics import BatchParams, VehicleParams, batch_substep
from .perf import tune_allocator
from .references import TrajectoryParams, sample_velocity_reference

OBS_DIM = 16
ACT_DIM = 6


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the four reward terms."""

    attitude: float = 0.4
    angular_rate: float = 0.05
    velocity: float = 0.2
    action: float = 0.3

    def __post_init__(self):
        for name in ("attitude", "angular_rate", "velocity", "action"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"reward weight {name} must be finite and >= 0")

    @property
    def max_reward(self) -> float:
        """Per-step supremum, attained only at perfect tracking with zero action."""
        return self.attitude + self.angular_rate + self.velocity + self.action


@dataclass(frozen=True)
class RandomizationSpec:
    """Per-episode physical parameter randomization ranges."""

    mass_factor: tuple = (0.90, 1.10)
    buoyancy_factor: tuple = (0.95, 1.05)
    cb_offset_radius: float = 0.02  # m

    def __post_init__(self):
        for name in ("mass_factor", "buoyancy_factor"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} range must satisfy 0 < lo <= hi")
        if self.cb_offset_radius < 0.0:
            raise ValueError("cb_offset_radius must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    """Environment section of the run configuration."""

    n_envs: int = 2048
    dt_physics: float = 0.01  # s
    decimation: int = 2  # physics substeps per control step
    episode_s: float = 5.0
    weights: RewardWeights = field(default_factory=RewardWeights)
    randomization: RandomizationSpec = field(default_factory=RandomizationSpec)
    z_max: float = 0.3  # integral anti-windup clamp, per component
    nu_max: float = 5.0  # divergence guard on any velocity component
    ref_speed: float = 0.5  # m/s
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    stagger_initial: bool = True  # spread first-episode clocks to decorrelate resets

    def __post_init__(self):
        if self.n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        if not 0.0 < self.dt_physics <= 0.05:
            raise ValueError("dt_physics must be in (0, 0.05]")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.episode_s <= 0.0 or self.z_max <= 0.0 or self.nu_max <= 0.0:
            raise ValueError("episode_s, z_max and nu_max must be positive")

    @property
    def dt_control(self) -> float:
        return self.dt_physics * self.decimation

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.episode_s / self.dt_control))


def randomize_params(
    base: VehicleParams, spec: RandomizationSpec, rng: np.random.Generator, max_retries: int = 8
) -> VehicleParams:
    """Sample one vehicle instance around ``base``.

    Mass (with weight and inertia) scales by a uniform factor, buoyancy by an
    independent uniform factor, and the CB offset moves by a point sampled
    uniformly inside a ball. Draws that break the parameter invariants are
    resampled a bounded number of times.
    """
    for _ in range(max_retries):
        mf = rng.uniform(*spec.mass_factor)
        bf = rng.uniform(*spec.buoyancy_factor)
        direction = rng.standard_normal(3)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        radius = spec.cb_offset_radius * rng.uniform() ** (1.0 / 3.0)
        offset = direction * (radius / norm)
        try:
            return replace(
                base,
                mass=base.mass * mf,
                weight=base.weight * mf,
                inertia=base.inertia * mf,
                buoyancy=base.buoyancy * bf,
                r_cb=base.r_cb + offset,
            )
        except ValueError:
            continue
    raise ValueError("could not sample valid vehicle parameters")


def observe(state, ref, z_v, z_q) -> np.ndarray:
    """Assemble the 16-element observation for a single vehicle.

    q_e is the w >= 0 error quaternion conj(q_d) (x) q, v_e = v - v_d.
    """
    q_e = so3.quat_error(ref.q_d, state.q)
    v_e = state.v - ref.v_d
    return np.concatenate([q_e, v_e, state.omega, z_v, z_q])


def reward(obs, action, weights: RewardWeights):
    """Reward of one observation/action pair (broadcasts over leading dims).

    r = w_v e^{-|v_e|^2} + w_omega e^{-|omega|^2} + w_q e^{-theta_e}
      + w_a e^{-|a|}, bounded in (0, sum of weights].
    """
    obs = np.asarray(obs, dtype=float)
    action = np.asarray(action, dtype=float)
    theta = 2.0 * np.arccos(np.clip(np.abs(obs[..., 0]), 0.0, 1.0))
    v_e2 = np.sum(obs[..., 4:7] ** 2, axis=-1)
    w2 = np.sum(obs[..., 7:10] ** 2, axis=-1)
    a_norm = np.linalg.norm(action, axis=-1)
    w = weights
    return (
        w.velocity * np.exp(-v_e2)
        + w.angular_rate * np.exp(-w2)
        + w.attitude * np.exp(-theta)
        + w.action * np.exp(-a_norm)
    )


class VecSwimEnv:
    """Batch of independent training environments stepped in lockstep.

    Determinism contract: a fixed seed gives every environment its own
    spawned generator, consumed only at that environment's resets, so
    trajectories are identical for any ``workers`` partitioning and any
    reset interleaving.
    """

    def __init__(self, base_params: VehicleParams, cfg: EnvConfig, seed: int = 0, workers: int = 1):
        tune_allocator()
        self.cfg = cfg
        self.base_params = base_params
        self.workers = max(1, int(workers))
        n = cfg.n_envs
        self.n_envs = n

        self._rngs = [np.random.Generator(np.random.PCG64(ss)) for ss in np.random.SeedSequence(seed).spawn(n)]
        self._stagger_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed).spawn(n + 1)[-1]))

        self.params = BatchParams(n)
        self.q = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        self.v = np.zeros((n, 3))
        self.w = np.zeros((n, 3))
        self.p = np.zeros((n, 3))
        self.z_v = np.zeros((n, 3))
        self.z_q = np.zeros((n, 3))
        self.steps = np.zeros(n, dtype=np.int64)
        self.v_d = np.zeros((n, 3))
        self.phase = np.zeros(n)
        self.q_pre = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        self.ep_return = np.zeros(n)
        self.ep_length = np.zeros(n, dtype=np.int64)

        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        self._slices = [s for s in np.array_split(np.arange(n), self.workers)]
        self._slices = [slice(s[0], s[-1] + 1) for s in self._slices if len(s)]

        self.reset_envs(np.arange(n))
        if cfg.stagger_initial:
            # Spread first-episode clocks so episode completions arrive every
            # step instead of in synchronized bursts (first episodes only).
            self.steps[:] = self._stagger_rng.integers(0, cfg.steps_per_episode, size=n)

    @property
    def t(self) -> np.ndarray:
        """Per-environment episode clock in seconds."""
        return self.steps * self.cfg.dt_control

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def reset_envs(self, idx) -> np.ndarray:
        """Re-randomize and restart the environments in ``idx``.

        Fresh vehicle parameters, fresh references, zeroed integrals, uniform
        random initial attitude, zero initial velocity. Returns the
        observations of the reset environments.
        """
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size == 0:
            return np.zeros((0, OBS_DIM))
        if np.any(idx < 0) or np.any(idx >= self.n_envs):
            raise ValueError("environment index out of range")
        new_params = []
        for i in idx:
            rng = self._rngs[i]
            new_params.append(randomize_params(self.base_params, self.cfg.randomization, rng))
            self.v_d[i] = sample_velocity_reference(rng, self.cfg.ref_speed)
            self.phase[i] = rng.uniform(0.0, 2.0 * np.pi)
            self.q_pre[i] = so3.random_unit_quat(rng)
            self.q[i] = so3.random_unit_quat(rng)
        self.params.set_rows(idx, new_params)
        self.v[idx] = 0.0
        self.w[idx] = 0.0
        self.p[idx] = 0.0
        self.z_v[idx] = 0.0
        self.z_q[idx] = 0.0
        self.steps[idx] = 0
        self.ep_return[idx] = 0.0
        self.ep_length[idx] = 0
        return self._observe_rows(idx)

    # ------------------------------------------------------------------
    # observation / reference assembly
    # ------------------------------------------------------------------

    def _reference_attitude(self, rows=slice(None)) -> np.ndarray:
        """Desired attitude q_pre (x) frenet(omega t + phase) for given rows."""
        tp = self.cfg.trajectory
        t = self.steps[rows] * self.cfg.dt_control
        arg = tp.omega * t + self.phase[rows]
        sin_a, cos_a = np.sin(arg), np.cos(arg)

        vel = np.stack([np.full_like(arg, tp.a), tp.b * sin_a, tp.c * cos_a], axis=-1)
        acc = np.stack([np.zeros_like(arg), tp.b * tp.omega * cos_a, -tp.c * tp.omega * sin_a], axis=-1)
        speed2 = np.sum(vel * vel, axis=-1, keepdims=True)
        tangent = vel / np.sqrt(speed2)
        tdot = acc - vel * (np.sum(vel * acc, axis=-1, keepdims=True) / speed2)
        tnorm = np.linalg.norm(tdot, axis=-1, keepdims=True)
        degenerate = tnorm[..., 0] < 1e-8
        if np.any(degenerate):
            fb = np.array([0.0, 1.0, 0.0]) - tangent * tangent[..., 1:2]
            tdot = np.where(degenerate[..., None], fb, tdot)
            tnorm = np.linalg.norm(tdot, axis=-1, keepdims=True)
        normal = tdot / tnorm
        binormal = np.cross(tangent, normal)
        rot = np.stack([tangent, normal, binormal], axis=-1)
        return so3.hamilton_product(self.q_pre[rows], so3.quat_from_matrix(rot))

    def _observe_rows(self, rows) -> np.ndarray:
        q_d = self._reference_attitude(rows)
        q_e = so3.quat_error(q_d, self.q[rows])
        obs = np.empty((q_e.shape[0], OBS_DIM))
        obs[:, 0:4] = q_e
        obs[:, 4:7] = self.v[rows] - self.v_d[rows]
        obs[:, 7:10] = self.w[rows]
        obs[:, 10:13] = self.z_v[rows]
        obs[:, 13:16] = self.z_q[rows]
        return obs

    def observe_all(self) -> np.ndarray:
        """Observations of every environment (no state change)."""
        return self._observe_rows(slice(None))

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def _physics(self, tau: np.ndarray) -> None:
        cfg = self.cfg

        def run(sl):
            for _ in range(cfg.decimation):
                batch_substep(self.params, self.q, self.v, self.w, self.p, tau, cfg.dt_physics, sl)

        if self._pool is not None and len(self._slices) > 1:
            list(self._pool.map(run, self._slices))
        else:
            for sl in self._slices:
                run(sl)

    def step(self, actions: np.ndarray):
        """Advance every environment by one control period.

        Returns (obs, rewards, dones, info); done environments are reset and
        their rows of ``obs`` already belong to the new episode. ``info``
        carries per-step diagnostics and the normalized returns of episodes
        completed during this call.
        """
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_envs, ACT_DIM):
            raise ValueError(f"actions must have shape {(self.n_envs, ACT_DIM)}, got {actions.shape}")
        cfg = self.cfg
        a_exec = np.clip(actions, -1.0, 1.0)
        tau = self.params.gain * a_exec

        self._physics(tau)
        self.steps += 1

        nu_bad = ~np.isfinite(self.v).all(axis=1) | ~np.isfinite(self.w).all(axis=1)
        diverged = nu_bad | (np.abs(self.v) > cfg.nu_max).any(axis=1) | (np.abs(self.w) > cfg.nu_max).any(axis=1)
        if np.any(nu_bad):
            # freeze broken rows so observation assembly stays finite
            rows = np.where(nu_bad)[0]
            self.q[rows] = np.array([1.0, 0.0, 0.0, 0.0])
            self.v[rows] = 0.0
            self.w[rows] = 0.0
            self.p[rows] = 0.0

        obs = self.observe_all()
        v_e = obs[:, 4:7]
        self.z_v[:] = np.clip(self.z_v + v_e * cfg.dt_control, -cfg.z_max, cfg.z_max)
        self.z_q[:] = np.clip(self.z_q + obs[:, 1:4] * cfg.dt_control, -cfg.z_max, cfg.z_max)
        obs[:, 10:13] = self.z_v
        obs[:, 13:16] = self.z_q

        rewards = reward(obs, a_exec, cfg.weights)
        rewards = np.where(np.isfinite(rewards) & ~nu_bad, rewards, 0.0)

        self.ep_return += rewards
        self.ep_length += 1
        timeout = self.steps >= cfg.steps_per_episode
        dones = timeout | diverged

        done_idx = np.where(dones)[0]
        completed_norm = np.zeros(0)
        if done_idx.size:
            denom = np.maximum(self.ep_length[done_idx], 1) * cfg.weights.max_reward
            completed_norm = self.ep_return[done_idx] / denom
            reset_obs = self.reset_envs(done_idx)
            obs[done_idx] = reset_obs

        info = {
            "diverged": int(np.count_nonzero(diverged)),
            "completed_norm_returns": completed_norm,
            "saturation_fraction": float(np.mean(np.abs(actions) > 1.0)),
        }
        return obs, rewards, dones, info

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None
