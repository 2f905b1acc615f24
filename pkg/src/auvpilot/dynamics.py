"""6DOF rigid-body + hydrodynamic vehicle model.

Implements the standard marine-craft form

    M nu_dot + C(nu) nu + D(nu) nu = K a + g_ext(q)

with M = M_RB + M_A (rigid-body plus added mass, folded together), the
skew-symmetric Coriolis parameterization built from M, diagonal
linear + quadratic damping, attitude-dependent hydrostatics, and a diagonal
thrust-gain map from normalized actions in [-1, 1]^6 to body forces/torques.
States use a NED world frame (z down) and a body frame at the center of mass.

``g_ext`` here is the *applied* hydrostatic wrench (weight plus buoyancy,
expressed in the body frame), so it enters the right-hand side with a plus
sign; the classical restoring vector is its negation.

Integration is semi-implicit Euler: velocities update first, then attitude
advances with the exact quaternion exponential of the *new* angular velocity
and position advances with the new linear velocity. Everything is written to
broadcast over a leading batch dimension so thousands of vehicle instances
step in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3

GRAVITY = 9.81  # m/s^2

_SYM_TOL = 1e-8


def _as_matrix(value, n: int, name: str) -> np.ndarray:
    """Accept a diagonal (length n) or full (n x n) matrix specification."""
    arr = np.asarray(value, dtype=float)
    if arr.shape == (n,):
        return np.diag(arr)
    if arr.shape == (n, n):
        return arr.copy()
    raise ValueError(f"{name} must be length-{n} diagonal or {n}x{n}, got shape {arr.shape}")


@dataclass(frozen=True)
class VehicleParams:
    """Hydrodynamic parameter set for one vehicle instance.

    Attributes:
        mass: dry mass, kg.
        inertia: 3x3 inertia tensor about the CM, body frame, kg m^2.
        added_mass: 6x6 hydrodynamic added-mass matrix.
        lin_damping: 6 diagonal linear damping coefficients (N s/m, N m s/rad).
        quad_damping: 6 diagonal quadratic damping coefficients.
        weight: gravity force magnitude, N.
        buoyancy: buoyancy force magnitude, N.
        r_cb: center of buoyancy relative to the CM, body frame, m
            (z down, so a CB above the CM has negative z).
        thrust_gain: 6 diagonal entries mapping a in [-1,1] to N / N m.
    """

    mass: float
    inertia: np.ndarray
    added_mass: np.ndarray
    lin_damping: np.ndarray
    quad_damping: np.ndarray
    weight: float
    buoyancy: float
    r_cb: np.ndarray
    thrust_gain: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inertia", _as_matrix(self.inertia, 3, "inertia"))
        object.__setattr__(self, "added_mass", _as_matrix(self.added_mass, 6, "added_mass"))
        for name in ("lin_damping", "quad_damping", "thrust_gain", "r_cb"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        self.validate()

    def validate(self) -> None:
        if not np.isfinite(self.mass) or self.mass <= 0.0:
            raise ValueError("mass must be positive and finite")
        for name in ("weight", "buoyancy"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be non-negative and finite")
        if self.r_cb.shape != (3,) or not np.all(np.isfinite(self.r_cb)):
            raise ValueError("r_cb must be a finite 3-vector")
        for name, arr in (("lin_damping", self.lin_damping), ("quad_damping", self.quad_damping)):
            if arr.shape != (6,) or not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
                raise ValueError(f"{name} must be 6 non-negative coefficients")
        if self.thrust_gain.shape != (6,) or np.any(self.thrust_gain <= 0.0):
            raise ValueError("thrust_gain must be 6 positive entries")
        if not np.allclose(self.inertia, self.inertia.T, atol=_SYM_TOL):
            raise ValueError("inertia must be symmetric")
        try:
            np.linalg.cholesky(self.inertia)
        except np.linalg.LinAlgError:
            raise ValueError("inertia must be positive definite") from None
        # Combined-mass PD is checked in mass_matrix (added mass may be indefinite
        # alone but the sum must not be).
        mass_matrix(self)

    @classmethod
    def default(cls) -> "VehicleParams":
        """BlueROV2-Heavy-class configuration defaults (public vehicle data)."""
        mass = 13.5
        return cls(
            mass=mass,
            inertia=np.diag([0.26, 0.23, 0.37]),
            added_mass=np.diag([6.36, 7.12, 18.68, 0.189, 0.135, 0.222]),
            lin_damping=np.array([10.0, 12.0, 15.0, 2.0, 2.0, 2.5]),
            quad_damping=np.array([30.0, 40.0, 45.0, 1.5, 1.5, 2.0]),
            weight=mass * GRAVITY,
            buoyancy=133.0,
            r_cb=np.array([0.0, 0.0, -0.01]),  # CB 1 cm above CM
            thrust_gain=np.array([113.0, 113.0, 160.0, 37.0, 20.0, 28.0]),
        )

    def to_dict(self) -> dict:
        return {
            "mass_kg": self.mass,
            "inertia_kgm2": self.inertia.tolist(),
            "added_mass": self.added_mass.tolist(),
            "lin_damping": self.lin_damping.tolist(),
            "quad_damping": self.quad_damping.tolist(),
            "weight_n": self.weight,
            "buoyancy_n": self.buoyancy,
            "cb_offset_m": self.r_cb.tolist(),
            "thrust_gain": self.thrust_gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        mass = float(d["mass_kg"])
        weight = float(d.get("weight_n", mass * GRAVITY))
        return cls(
            mass=mass,
            inertia=d["inertia_kgm2"],
            added_mass=d["added_mass"],
            lin_damping=d["lin_damping"],
            quad_damping=d["quad_damping"],
            weight=weight,
            buoyancy=float(d["buoyancy_n"]),
            r_cb=d["cb_offset_m"],
            thrust_gain=d["thrust_gain"],
        )


@dataclass
class BodyState:
    """Kinematic state of one vehicle: attitude, body velocities, NED position."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.p = np.asarray(self.p, dtype=float)

    @property
    def nu(self) -> np.ndarray:
        return np.concatenate([self.v, self.omega])


def mass_matrix(params: VehicleParams) -> np.ndarray:
    """Combined mass matrix M = M_RB + M_A; symmetric positive definite.

    Raises ValueError for an asymmetric added-mass input or a non-PD sum
    (the PD check is Cholesky success).
    """
    ma = params.added_mass
    if not np.allclose(ma, ma.T, atol=_SYM_TOL):
        raise ValueError("added_mass must be symmetric")
    m_rb = np.zeros((6, 6))
    m_rb[:3, :3] = params.mass * np.eye(3)
    m_rb[3:, 3:] = params.inertia
    m = m_rb + 0.5 * (ma + ma.T)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError("combined mass matrix is not positive definite") from None
    return m


def coriolis_wrench(m: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """C(nu) nu with C built skew-symmetrically from M.

    With h = M nu split as (h1, h2), the product is
    [omega x h1, v x h1 + omega x h2]; nu . C(nu) nu = 0 identically.
    """
    nu = np.asarray(nu, dtype=float)
    h = m @ nu
    v, w = nu[:3], nu[3:]
    return np.concatenate([np.cross(w, h[:3]), np.cross(v, h[:3]) + np.cross(w, h[3:])])


def damping_wrench(params: VehicleParams, nu: np.ndarray) -> np.ndarray:
    """Diagonal damping (d_lin_i + d_quad_i |nu_i|) nu_i, opposing motion."""
    nu = np.asarray(nu, dtype=float)
    return (params.lin_damping + params.quad_damping * np.abs(nu)) * nu


def restoring_wrench(params: VehicleParams, q: np.ndarray) -> np.ndarray:
    """Applied hydrostatic wrench (weight + buoyancy) in the body frame.

    Force (W - B) R(q)^T e_down; torque r_cb x (-B R(q)^T e_down). Zero at
    level attitude when W = B and the CB sits on the body z-axis. This is the
    external wrench: it is *added* on the right-hand side of the dynamics.
    """
    down = _body_down(np.asarray(q, dtype=float))
    force = (params.weight - params.buoyancy) * down
    torque = np.cross(params.r_cb, -params.buoyancy * down)
    return np.concatenate([force, torque], axis=-1)


def actuation_wrench(params: VehicleParams, a: np.ndarray) -> tuple[np.ndarray, bool]:
    """Thrust wrench tau_i = gain_i * a_i with a clamped to [-1, 1].

    Returns (wrench, saturated); saturated is True if any component was
    clamped.
    """
    a = np.asarray(a, dtype=float)
    clipped = np.clip(a, -1.0, 1.0)
    return params.thrust_gain * clipped, bool(np.any(clipped != a))


def _body_down(q: np.ndarray) -> np.ndarray:
    """World down axis expressed in the body frame: third row of R(q)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3,), dtype=float)
    out[..., 0] = 2.0 * (x * z - w * y)
    out[..., 1] = 2.0 * (y * z + w * x)
    out[..., 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def _matvec6(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(n,6,6) @ (n,6) with a fixed, unrolled summation order.

    The explicit j-loop keeps results bit-identical under any partitioning of
    the batch dimension (worker-count determinism) and beats batched matmul
    at this tiny size.
    """
    out = m[:, :, 0] * x[:, 0:1]
    for j in range(1, 6):
        out = out + m[:, :, j] * x[:, j : j + 1]
    return out


class BatchParams:
    """Struct-of-arrays parameter set for n vehicle instances.

    Rows are immutable within an episode; M and its inverse (computed via the
    Cholesky factor, which doubles as the PD check) are cached per row.
    """

    __slots__ = ("n", "mass", "weight", "buoyancy", "r_cb", "lin_d", "quad_d",
                 "gain", "m", "minv")

    def __init__(self, n: int):
        self.n = n
        self.mass = np.zeros(n)
        self.weight = np.zeros(n)
        self.buoyancy = np.zeros(n)
        self.r_cb = np.zeros((n, 3))
        self.lin_d = np.zeros((n, 6))
        self.quad_d = np.zeros((n, 6))
        self.gain = np.ones((n, 6))
        self.m = np.zeros((n, 6, 6))
        self.minv = np.zeros((n, 6, 6))

    @classmethod
    def from_params(cls, params_list) -> "BatchParams":
        bp = cls(len(params_list))
        bp.set_rows(np.arange(len(params_list)), params_list)
        return bp

    def set_rows(self, idx, params_list) -> None:
        for i, p in zip(np.atleast_1d(idx), params_list):
            self.mass[i] = p.mass
            self.weight[i] = p.weight
            self.buoyancy[i] = p.buoyancy
            self.r_cb[i] = p.r_cb
            self.lin_d[i] = p.lin_damping
            self.quad_d[i] = p.quad_damping
            self.gain[i] = p.thrust_gain
            m = mass_matrix(p)
            self.m[i] = m
            chol = np.linalg.cholesky(m)
            linv = np.linalg.inv(chol)
            self.minv[i] = linv.T @ linv

def batch_substep(bp: BatchParams, q, v, w, p, tau, dt: float, sl=slice(None)):
    """One semi-implicit physics substep on rows ``sl`` of the batch, in place.

    tau is the (n,6) actuation wrench, held constant across substeps of a
    control period.
    """
    qs, vs, ws = q[sl], v[sl], w[sl]
    nu = np.concatenate([vs, ws], axis=1)

    h = _matvec6(bp.m[sl], nu)
    h1, h2 = h[:, :3], h[:, 3:]
    cor = np.concatenate([np.cross(ws, h1), np.cross(vs, h1) + np.cross(ws, h2)], axis=1)
    damp = (bp.lin_d[sl] + bp.quad_d[sl] * np.abs(nu)) * nu

    down = _body_down(qs)
    f_hyd = (bp.weight[sl] - bp.buoyancy[sl])[:, None] * down
    t_hyd = np.cross(bp.r_cb[sl], -bp.buoyancy[sl][:, None] * down)

    rhs = tau[sl] - cor - damp
    rhs[:, :3] += f_hyd
    rhs[:, 3:] += t_hyd

    nu = nu + _matvec6(bp.minv[sl], rhs) * dt
    v[sl] = nu[:, :3]
    w[sl] = nu[:, 3:]
    q[sl] = so3.integrate_attitude(qs, nu[:, 3:], dt)
    p[sl] = p[sl] + so3.rotate_vector(qs, nu[:, :3]) * dt


def step_dynamics(state: BodyState, a, params: VehicleParams, dt: float) -> BodyState:
    """Advance one vehicle by one semi-implicit Euler step of length dt.

    Solves M nu_dot = K a - C(nu) nu - D(nu) nu + g_ext(q), updates nu, then
    integrates attitude with the new angular velocity (exact exponential map)
    and position with the new linear velocity. dt must lie in (0, 0.05].
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError("dt must be in (0, 0.05]")
    bp = BatchParams.from_params([params])
    q = state.q[None].copy()
    v = state.v[None].copy()
    w = state.omega[None].copy()
    p = state.p[None].copy()
    tau, _ = actuation_wrench(params, a)
    batch_substep(bp, q, v, w, p, tau[None], dt)
    return BodyState(q=q[0], v=v[0], omega=w[0], p=p[0])


def total_energy(params: VehicleParams, state: BodyState) -> float:
    """Kinetic plus hydrostatic potential energy (for passivity checks).

    U = (B - W) z + B e3^T R(q) r_cb, with z the NED down position.
    """
    m = mass_matrix(params)
    nu = state.nu
    kinetic = 0.5 * float(nu @ m @ nu)
    cb_world = so3.rotate_vector(state.q, params.r_cb)
    potential = (params.buoyancy - params.weight) * state.p[2] + params.buoyancy * cb_world[2]
    return kinetic + float(potential)
