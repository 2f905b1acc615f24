"""Built-in environment throughput benchmark and determinism digest."""

from __future__ import annotations

import hashlib
import time

import numpy as np

from .dynamics import VehicleParams
from .env import ACT_DIM, EnvConfig, VecSwimEnv


def _action_stream(n_envs: int, seed: int = 12345):
    """Deterministic action sequence, independent of env worker partitioning."""
    rng = np.random.Generator(np.random.PCG64(seed))
    while True:
        yield rng.uniform(-1.0, 1.0, (n_envs, ACT_DIM))


def run_benchmark(
    base_params: VehicleParams | None = None,
    cfg: EnvConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    min_seconds: float = 2.0,
    warmup_steps: int = 5,
) -> dict:
    """Measure sustained environment steps per second.

    One environment step = one control period of one environment, so a batch
    call counts n_envs steps.
    """
    base_params = base_params or VehicleParams.default()
    cfg = cfg or EnvConfig()
    env = VecSwimEnv(base_params, cfg, seed=seed, workers=workers)
    actions = _action_stream(cfg.n_envs)
    for _ in range(warmup_steps):
        env.step(next(actions))

    steps = 0
    t0 = time.perf_counter()
    while True:
        env.step(next(actions))
        steps += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= min_seconds:
            break
    env.close()
    env_steps = steps * cfg.n_envs
    return {
        "n_envs": cfg.n_envs,
        "workers": workers,
        "batch_steps": steps,
        "env_steps": env_steps,
        "elapsed_s": elapsed,
        "env_steps_per_s": env_steps / elapsed,
    }


def trajectory_digest(
    base_params: VehicleParams | None = None,
    cfg: EnvConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    steps: int = 50,
) -> str:
    """SHA-256 over the exact bytes of every observation/reward/done batch.

    Two runs with different ``workers`` must produce identical digests; that
    is the worker-count determinism check.
    """
    base_params = base_params or VehicleParams.default()
    cfg = cfg or EnvConfig()
    env = VecSwimEnv(base_params, cfg, seed=seed, workers=workers)
    actions = _action_stream(cfg.n_envs)
    digest = hashlib.sha256()
    digest.update(env.observe_all().tobytes())
    for _ in range(steps):
        obs, rewards, dones, _ = env.step(next(actions))
        digest.update(obs.tobytes())
        digest.update(rewards.tobytes())
        digest.update(np.asarray(dones).tobytes())
    env.close()
    return digest.hexdigest()
