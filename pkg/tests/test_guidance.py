import numpy as np
import pytest

from auvpilot import so3
from auvpilot.guidance import GuidanceState, WaypointPath, cross_track_error, los_velocity, los_world_velocity


def straight_path(**kw):
    return WaypointPath(np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]]), **kw)


class TestPathValidation:
    def test_needs_two_distinct_waypoints(self):
        with pytest.raises(ValueError):
            WaypointPath(np.array([[0.0, 0, 0]]))
        with pytest.raises(ValueError):
            WaypointPath(np.array([[0.0, 0, 0], [0.0, 0, 0]]))

    def test_positive_parameters(self):
        with pytest.raises(ValueError):
            straight_path(lookahead=0.0)
        with pytest.raises(ValueError):
            straight_path(acceptance_radius=-1.0)


class TestLosVelocity:
    def test_on_path_command_is_along_segment(self):
        path = straight_path()
        v, gs = los_world_velocity(np.array([5.0, 0.0, 0.0]), path, GuidanceState())
        np.testing.assert_allclose(v, [path.speed, 0.0, 0.0], atol=1e-12)
        assert not gs.finished

    def test_lookahead_triangle_geometry(self):
        path = straight_path(lookahead=1.0)
        v, _ = los_world_velocity(np.array([5.0, 2.0, 0.0]), path, GuidanceState())
        expected = np.array([1.0, -2.0, 0.0])
        expected *= path.speed / np.linalg.norm(expected)
        np.testing.assert_allclose(v, expected, atol=1e-12)

    def test_finishes_at_final_waypoint(self):
        path = straight_path(acceptance_radius=0.5)
        v, gs = los_world_velocity(np.array([99.8, 0.1, 0.0]), path, GuidanceState())
        assert gs.finished
        np.testing.assert_array_equal(v, np.zeros(3))

    def test_speed_contract_while_active(self, rng):
        path = WaypointPath(rng.normal(0, 10, (5, 3)), speed=0.7)
        gs = GuidanceState()
        for _ in range(50):
            p = rng.normal(0, 12, 3)
            v, gs2 = los_world_velocity(p, path, gs)
            if gs2.finished:
                break
            assert np.linalg.norm(v) == pytest.approx(path.speed, abs=1e-12)

    def test_attitude_independence(self, rng):
        path = straight_path()
        p = np.array([3.0, 1.5, -0.5])
        v_world_ref, _ = los_world_velocity(p, path, GuidanceState())
        for _ in range(20):
            q = so3.random_unit_quat(rng)
            v_body, _ = los_velocity(p, q, path, GuidanceState())
            np.testing.assert_allclose(so3.rotate_vector(q, v_body), v_world_ref, atol=1e-12)

    def test_segment_switching(self):
        path = WaypointPath(np.array([[0.0, 0, 0], [10.0, 0, 0], [10.0, 10, 0]]), acceptance_radius=0.5)
        v, gs = los_world_velocity(np.array([9.8, 0.0, 0.0]), path, GuidanceState())
        assert gs.segment == 1
        assert v[1] > 0.0  # now steering along +y


class TestCrossTrack:
    def test_zero_on_line(self):
        path = straight_path()
        assert cross_track_error(np.array([5.0, 0, 0]), path, GuidanceState()) == 0.0

    def test_planar_distance(self):
        path = WaypointPath(np.array([[0.0, 0, 0], [10.0, 0, 0]]))
        assert cross_track_error(np.array([5.0, 3.0, 0.0]), path, GuidanceState()) == pytest.approx(3.0)

    def test_3d_point_line_distance(self):
        path = WaypointPath(np.array([[0.0, 0, 0], [0.0, 0, 10.0]]))
        assert cross_track_error(np.array([0.0, 4.0, 5.0]), path, GuidanceState()) == pytest.approx(4.0)


class TestKinematicConvergence:
    def test_particle_converges_to_path(self):
        path = WaypointPath(
            np.array([[0.0, 0.0, 0.0], [400.0, 0.0, 0.0]]), lookahead=1.0, speed=0.5
        )
        p = np.array([0.0, 10.0, 0.0])
        gs = GuidanceState()
        dt = 0.02
        last = cross_track_error(p, path, gs)
        for _ in range(60_000):
            v, gs = los_world_velocity(p, path, gs)
            p = p + v * dt
            e = cross_track_error(p, path, gs)
            assert e <= last + 1e-12
            last = e
            if e < 0.01:
                break
        assert last < 0.01
