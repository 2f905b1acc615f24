"""Quaternion and rotation arithmetic shared by the simulator, the training
environment and the evaluation harness.

Conventions
-----------
* Quaternions are scalar-first arrays ``[w, x, y, z]``. Every function
  broadcasts over leading dimensions, so a batch of N attitudes is simply an
  ``(N, 4)`` array.
* All returned quaternions are renormalized to unit length; products keep the
  raw sign, while error quaternions are canonicalized to ``w >= 0`` so that
  the two antipodal representations of a rotation map to one value.
* Euler angles use the intrinsic ZYX (yaw-pitch-roll) sequence of marine
  craft / SNAME usage; angles are radians.
* Frames: rotating a body-frame vector into the world frame is
  ``rotate_vector(q, v)``; the inverse transform uses ``conjugate(q)``.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def quat_identity(shape=()) -> np.ndarray:
    """Identity quaternion(s) with the given leading shape."""
    q = np.zeros(tuple(np.atleast_1d(shape)) + (4,)) if shape else np.zeros(4)
    q[..., 0] = 1.0
    return q


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < _EPS):
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def hamilton_product(q1, q2) -> np.ndarray:
    """Hamilton product q1 (x) q2, renormalized.

    Non-commutative; composing rotations applies q2 first, then q1.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    _check_finite(q1, q2)
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    out = np.empty(np.broadcast(q1, q2).shape, dtype=float)
    out[..., 0] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[..., 1] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    out[..., 2] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    out[..., 3] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    return quat_normalize(out)


def conjugate(q) -> np.ndarray:
    """Conjugate [w, -x, -y, -z]; the inverse rotation for unit input."""
    q = np.asarray(q, dtype=float)
    _check_finite(q)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_error(q_d, q) -> np.ndarray:
    """Attitude error conj(q_d) (x) q, canonicalized to w >= 0.

    Identity iff q equals q_d up to global sign. The w >= 0 convention keeps
    the vector part (and hence any integral of it) continuous across the
    double cover.
    """
    qe = hamilton_product(conjugate(q_d), q)
    flip = qe[..., 0] < 0.0
    if np.any(flip):
        qe = np.where(flip[..., None], -qe, qe)
    return qe


def quat_angle(q_d, q) -> np.ndarray:
    """Geodesic rotation angle between two attitudes, in [0, pi].

    Equals 2*acos(|<q_d, q>|); symmetric in its arguments and invariant to
    the sign of either quaternion.
    """
    q_d = np.asarray(q_d, dtype=float)
    q = np.asarray(q, dtype=float)
    dot = np.abs(np.sum(q_d * q, axis=-1))
    return 2.0 * np.arccos(np.clip(dot, 0.0, 1.0))


def quat_exp_map(u) -> np.ndarray:
    """Exponential map of a pure-vector quaternion argument u (shape (...,3))."""
    u = np.asarray(u, dtype=float)
    theta = np.linalg.norm(u, axis=-1, keepdims=True)
    # sin(theta)/theta with the small-angle limit 1
    small = theta < 1e-10
    safe = np.where(small, 1.0, theta)
    s = np.where(small, 1.0 - theta * theta / 6.0, np.sin(safe) / safe)
    out = np.empty(u.shape[:-1] + (4,), dtype=float)
    out[..., 0] = np.cos(theta[..., 0])
    out[..., 1:] = u * s
    return out


def integrate_attitude(q, omega, dt: float) -> np.ndarray:
    """Advance attitude by one step of constant body angular velocity.

    Uses the exact exponential-map update q (x) exp([0, omega*dt/2]), which is
    norm-exact and, for constant omega, composes: n steps of dt equal one
    step of n*dt.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    omega = np.asarray(omega, dtype=float)
    dq = quat_exp_map(omega * (0.5 * dt))
    return hamilton_product(q, dq)


def rotate_vector(q, v) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q: the vector part of q(x)(0,v)(x)conj(q).

    Uses the two-cross-product form; preserves the vector norm.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_finite(q, v)
    u = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix (body -> world) for each quaternion."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[..., 0, 1] = 2.0 * (x * y - w * z)
    m[..., 0, 2] = 2.0 * (x * z + w * y)
    m[..., 1, 0] = 2.0 * (x * y + w * z)
    m[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[..., 1, 2] = 2.0 * (y * z - w * x)
    m[..., 2, 0] = 2.0 * (x * z - w * y)
    m[..., 2, 1] = 2.0 * (y * z + w * x)
    m[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


def quat_from_matrix(m) -> np.ndarray:
    """Quaternion of a proper rotation matrix, Shepperd's method (vectorized).

    Picks the largest of the four diagonal quantities per element, which
    stays numerically stable near 180-degree rotations.
    """
    m = np.asarray(m, dtype=float)
    t = m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2]
    d = np.stack(
        [
            1.0 + t,
            1.0 + 2.0 * m[..., 0, 0] - t,
            1.0 + 2.0 * m[..., 1, 1] - t,
            1.0 + 2.0 * m[..., 2, 2] - t,
        ],
        axis=-1,
    )
    case = np.argmax(d, axis=-1)
    root = 0.5 * np.sqrt(np.maximum(np.take_along_axis(d, case[..., None], -1)[..., 0], _EPS))
    s = 0.25 / root

    m01, m02, m10 = m[..., 0, 1], m[..., 0, 2], m[..., 1, 0]
    m12, m20, m21 = m[..., 1, 2], m[..., 2, 0], m[..., 2, 1]
    cands = np.empty(m.shape[:-2] + (4, 4), dtype=float)
    # case 0: w largest
    cands[..., 0, 0] = root
    cands[..., 0, 1] = (m21 - m12) * s
    cands[..., 0, 2] = (m02 - m20) * s
    cands[..., 0, 3] = (m10 - m01) * s
    # case 1: x largest
    cands[..., 1, 0] = (m21 - m12) * s
    cands[..., 1, 1] = root
    cands[..., 1, 2] = (m01 + m10) * s
    cands[..., 1, 3] = (m02 + m20) * s
    # case 2: y largest
    cands[..., 2, 0] = (m02 - m20) * s
    cands[..., 2, 1] = (m01 + m10) * s
    cands[..., 2, 2] = root
    cands[..., 2, 3] = (m12 + m21) * s
    # case 3: z largest
    cands[..., 3, 0] = (m10 - m01) * s
    cands[..., 3, 1] = (m02 + m20) * s
    cands[..., 3, 2] = (m12 + m21) * s
    cands[..., 3, 3] = root

    idx = case[..., None, None]
    q = np.take_along_axis(cands, np.broadcast_to(idx, case.shape + (1, 4)), axis=-2)[..., 0, :]
    return quat_normalize(q)


def euler_to_quat(roll, pitch, yaw) -> np.ndarray:
    """Quaternion from intrinsic ZYX Euler angles (radians)."""
    roll = np.asarray(roll, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    yaw = np.asarray(yaw, dtype=float)
    cr, sr = np.cos(roll / 2.0), np.sin(roll / 2.0)
    cp, sp = np.cos(pitch / 2.0), np.sin(pitch / 2.0)
    cy, sy = np.cos(yaw / 2.0), np.sin(yaw / 2.0)
    out = np.empty(np.broadcast(roll, pitch, yaw).shape + (4,), dtype=float)
    out[..., 0] = cr * cp * cy + sr * sp * sy
    out[..., 1] = sr * cp * cy - cr * sp * sy
    out[..., 2] = cr * sp * cy + sr * cp * sy
    out[..., 3] = cr * cp * sy - sr * sp * cy
    return quat_normalize(out)


GIMBAL_LOCK_TOL = 1e-6  # radians from pitch = +/- pi/2


def near_gimbal_lock(q, tol: float = GIMBAL_LOCK_TOL) -> np.ndarray:
    """True where pitch is within tol of +/- pi/2 (ZYX extraction degenerate)."""
    q = np.asarray(q, dtype=float)
    sinp = 2.0 * (q[..., 0] * q[..., 2] - q[..., 3] * q[..., 1])
    pitch = np.arcsin(np.clip(sinp, -1.0, 1.0))
    return (np.pi / 2.0 - np.abs(pitch)) < tol


def quat_to_euler(q) -> np.ndarray:
    """Intrinsic ZYX Euler angles [roll, pitch, yaw] of the quaternion.

    Near gimbal lock (|pitch| within GIMBAL_LOCK_TOL of pi/2, see
    near_gimbal_lock) only yaw - roll is observable; the ambiguity is
    resolved by returning roll = 0 and folding the full rotation into yaw.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]

    sinp = np.clip(2.0 * (w * y - z * x), -1.0, 1.0)
    pitch = np.arcsin(sinp)
    locked = (np.pi / 2.0 - np.abs(pitch)) < GIMBAL_LOCK_TOL

    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    if np.any(locked):
        yaw_locked = 2.0 * np.arctan2(z, w)
        roll = np.where(locked, 0.0, roll)
        yaw = np.where(locked, yaw_locked, yaw)
    return np.stack([roll, pitch, yaw], axis=-1)


def random_unit_quat(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniformly distributed random rotation(s), Shoemake's subgroup method."""
    shape = () if size is None else (size,)
    u1, u2, u3 = np.moveaxis(rng.random(shape + (3,)), -1, 0)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    t2, t3 = 2.0 * np.pi * u2, 2.0 * np.pi * u3
    q = np.stack([a * np.sin(t2), a * np.cos(t2), b * np.sin(t3), b * np.cos(t3)], axis=-1)
    return q
