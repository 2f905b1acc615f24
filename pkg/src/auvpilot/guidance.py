"""3D line-of-sight guidance over waypoint polylines.

Produces body-frame linear-velocity references for a fully actuated vehicle:
the desired world-frame velocity points at the lookahead point a fixed
distance ahead of the vehicle's projection onto the active segment, scaled to
the commanded speed. The world-frame command depends only on position, so the
vehicle is free to hold any attitude while converging to the path; only the
final rotation into the body frame uses the attitude.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import so3


@dataclass(frozen=True)
class WaypointPath:
    """Ordered NED waypoints with guidance parameters.

    Attributes:
        waypoints: (k, 3) array of NED positions, k >= 2, consecutive
            waypoints distinct.
        acceptance_radius: m; switching distance at segment ends.
        speed: m/s; commanded speed while any segment is active.
        lookahead: m; along-track distance to the steering point.
    """

    waypoints: np.ndarray
    acceptance_radius: float = 0.3
    speed: float = 0.5
    lookahead: float = 1.0

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        object.__setattr__(self, "waypoints", wp)
        if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < 2:
            raise ValueError("waypoints must be a (k, 3) array with k >= 2")
        if not np.all(np.isfinite(wp)):
            raise ValueError("waypoints must be finite")
        if np.any(np.linalg.norm(np.diff(wp, axis=0), axis=1) < 1e-9):
            raise ValueError("consecutive waypoints must be distinct")
        if self.lookahead <= 0.0 or self.acceptance_radius <= 0.0 or self.speed <= 0.0:
            raise ValueError("lookahead, acceptance_radius and speed must be positive")

    @property
    def n_segments(self) -> int:
        return self.waypoints.shape[0] - 1


@dataclass(frozen=True)
class GuidanceState:
    """Progress along the path: active segment index and completion flag."""

    segment: int = 0
    finished: bool = False


def _advance(p: np.ndarray, path: WaypointPath, gs: GuidanceState) -> GuidanceState:
    seg = gs.segment
    while seg < path.n_segments:
        end = path.waypoints[seg + 1]
        if np.linalg.norm(end - p) > path.acceptance_radius:
            break
        seg += 1
    if seg >= path.n_segments:
        return GuidanceState(segment=path.n_segments - 1, finished=True)
    return replace(gs, segment=seg)


def los_world_velocity(p, path: WaypointPath, gs: GuidanceState):
    """World-frame LOS velocity command and updated guidance state.

    Projects the position onto the active segment, steers toward the point
    ``lookahead`` ahead of the projection along the segment, and commands
    ``speed`` along that direction. Returns (v_world, new_state); the command
    is zero once the final waypoint has been reached.
    """
    p = np.asarray(p, dtype=float)
    if gs.finished:
        return np.zeros(3), gs
    gs = _advance(p, path, gs)
    if gs.finished:
        return np.zeros(3), gs

    seg = gs.segment
    while True:
        start, end = path.waypoints[seg], path.waypoints[seg + 1]
        d = end - start
        length = np.linalg.norm(d)
        if length >= 1e-9:
            break
        warnings.warn(f"skipping degenerate path segment {seg}")
        seg += 1
        if seg >= path.n_segments:
            return np.zeros(3), GuidanceState(segment=path.n_segments - 1, finished=True)
    d_hat = d / length

    along = float(np.dot(p - start, d_hat))
    projection = start + np.clip(along, 0.0, length) * d_hat
    target = projection + path.lookahead * d_hat
    direction = target - p
    dist = np.linalg.norm(direction)
    if dist < 1e-12:
        direction, dist = d_hat, 1.0
    return path.speed * direction / dist, replace(gs, segment=seg)


def los_velocity(p, q, path: WaypointPath, gs: GuidanceState):
    """Body-frame LOS velocity reference.

    Same command as los_world_velocity, rotated into the body frame of
    attitude ``q``; the norm equals ``path.speed`` while any segment is
    active and zero when finished.
    """
    v_world, gs = los_world_velocity(p, path, gs)
    return so3.rotate_vector(so3.conjugate(q), v_world), gs


def cross_track_error(p, path: WaypointPath, gs: GuidanceState) -> float:
    """Perpendicular distance from p to the active segment's line."""
    p = np.asarray(p, dtype=float)
    seg = min(gs.segment, path.n_segments - 1)
    start, end = path.waypoints[seg], path.waypoints[seg + 1]
    d = end - start
    d_hat = d / np.linalg.norm(d)
    offset = p - start
    return float(np.linalg.norm(offset - np.dot(offset, d_hat) * d_hat))
