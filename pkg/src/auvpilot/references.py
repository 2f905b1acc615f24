"""Desired-state generation for training episodes.

Each episode tracks two independent references: a constant body-frame linear
velocity drawn uniformly on the sphere of radius ``speed``, and a
time-varying attitude that follows the Frenet-Serret frame of the curve whose
velocity is

    v(t) = [a, b sin(w t + phase), c cos(w t + phase)]

optionally pre-rotated by a constant random attitude so episodes decorrelate
without changing the frame's angular-rate statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import so3

DEFAULT_SPEED = 0.5  # m/s, norm of every sampled velocity reference


@dataclass(frozen=True)
class TrajectoryParams:
    """Coefficients of the attitude-reference trajectory."""

    a: float = 0.5  # m/s, constant x component (must stay > 0)
    b: float = 0.5  # m/s
    c: float = 0.3  # m/s
    omega: float = 0.2  # rad/s
    phase: float = 0.0  # rad, per-episode offset of the sinusoid argument

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError("trajectory coefficient a must be positive")
        if not self.omega > 0.0:
            raise ValueError("trajectory frequency must be positive")


@dataclass(frozen=True)
class ReferenceState:
    """Desired body velocity and attitude at one control step."""

    v_d: np.ndarray  # (3,) m/s
    q_d: np.ndarray  # (4,) unit quaternion


def sample_velocity_reference(rng: np.random.Generator, speed: float = DEFAULT_SPEED) -> np.ndarray:
    """Velocity reference with uniformly random direction and norm ``speed``."""
    while True:
        d = rng.standard_normal(3)
        n = np.linalg.norm(d)
        if n > 1e-8:
            return (speed / n) * d


def frenet_frame(tp: TrajectoryParams, t, prev_normal=None):
    """Tangent/normal/binormal of the reference curve at time(s) t.

    Returns (tangent, normal, binormal, degenerate) with shapes (..., 3) and
    a boolean mask of the points where the curvature vanished. Degenerate
    points use ``prev_normal`` (projected back orthogonal to the tangent)
    when given, else a fixed fallback axis, so straight segments keep a
    continuous frame.
    """
    t = np.asarray(t, dtype=float)
    arg = tp.omega * t + tp.phase
    vel = np.stack(
        [np.full_like(arg, tp.a), tp.b * np.sin(arg), tp.c * np.cos(arg)], axis=-1
    )
    acc = np.stack(
        [np.zeros_like(arg), tp.b * tp.omega * np.cos(arg), -tp.c * tp.omega * np.sin(arg)],
        axis=-1,
    )
    speed = np.linalg.norm(vel, axis=-1, keepdims=True)
    tangent = vel / speed
    # d/dt tangent, up to the positive factor 1/|v|: component of acc orthogonal to v
    tdot = acc - vel * (np.sum(vel * acc, axis=-1, keepdims=True) / speed**2)
    tnorm = np.linalg.norm(tdot, axis=-1, keepdims=True)
    degenerate = tnorm[..., 0] < 1e-8

    fallback = np.broadcast_to(np.array([0.0, 1.0, 0.0]), tangent.shape)
    if prev_normal is not None:
        fallback = np.broadcast_to(np.asarray(prev_normal, dtype=float), tangent.shape)
    raw = np.where(degenerate[..., None], fallback, tdot)
    # re-orthogonalize against the tangent before normalizing
    raw = raw - tangent * np.sum(raw * tangent, axis=-1, keepdims=True)
    rnorm = np.linalg.norm(raw, axis=-1, keepdims=True)
    bad = rnorm[..., 0] < 1e-8  # fallback parallel to tangent
    if np.any(bad):
        alt = np.broadcast_to(np.array([0.0, 0.0, 1.0]), tangent.shape)
        alt = alt - tangent * np.sum(alt * tangent, axis=-1, keepdims=True)
        raw = np.where(bad[..., None], alt, raw)
        rnorm = np.linalg.norm(raw, axis=-1, keepdims=True)
    normal = raw / rnorm
    binormal = np.cross(tangent, normal)
    return tangent, normal, binormal, degenerate


def frenet_attitude(tp: TrajectoryParams, t, prev_normal=None) -> np.ndarray:
    """Quaternion whose body x/y/z axes are the curve's T/N/B at time(s) t."""
    tangent, normal, binormal, _ = frenet_frame(tp, t, prev_normal)
    rot = np.stack([tangent, normal, binormal], axis=-1)  # columns are the axes
    return so3.quat_from_matrix(rot)


def episode_references(
    rng: np.random.Generator,
    tp_base: TrajectoryParams,
    horizon: int,
    dt: float,
    speed: float = DEFAULT_SPEED,
) -> list[ReferenceState]:
    """Reference schedule for one episode of ``horizon`` control steps.

    One velocity reference is drawn and held for the whole episode; the
    attitude reference follows the Frenet frame at a random phase, pre-rotated
    by a random constant attitude. Two calls with identical generator state
    produce identical schedules.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    v_d = sample_velocity_reference(rng, speed)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    q_pre = so3.random_unit_quat(rng)
    tp = replace(tp_base, phase=phase)

    out = []
    prev_normal = None
    for k in range(horizon):
        tangent, normal, binormal, degenerate = frenet_frame(tp, k * dt, prev_normal)
        prev_normal = normal
        rot = np.stack([tangent, normal, binormal], axis=-1)
        q_d = so3.hamilton_product(q_pre, so3.quat_from_matrix(rot))
        out.append(ReferenceState(v_d=v_d.copy(), q_d=q_d))
    return out
