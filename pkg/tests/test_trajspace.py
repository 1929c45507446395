import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffplan import trajspace as ts


def traj(points):
    return ts.Trajectory(np.array(points, dtype=float))


class TestProjection:
    def test_first_differences(self):
        t = traj([(1.0, 0.5), (2.0, 1.0), (3.5, 1.0)] + [(3.5, 1.0)] * 5)
        a = ts.to_actions(t)
        expected = np.array([(1.0, 0.5), (1.0, 0.5), (1.5, 0.0)] + [(0.0, 0.0)] * 5)
        np.testing.assert_array_equal(a.deltas, expected)

    def test_zero_trajectory(self):
        a = ts.to_actions(traj(np.zeros((8, 2))))
        np.testing.assert_array_equal(a.deltas, np.zeros((8, 2)))

    def test_constant_velocity(self):
        v = 10.0
        t = traj([(v * 0.5 * (k + 1), 0.0) for k in range(8)])
        a = ts.to_actions(t)
        np.testing.assert_allclose(a.deltas, np.tile([5.0, 0.0], (8, 1)))

    def test_cumulative_sum(self):
        a = ts.ActionSequence(np.tile([1.0, 0.0], (8, 1)))
        t = ts.to_trajectory(a)
        np.testing.assert_array_equal(t.points[:, 0], np.arange(1, 9))
        np.testing.assert_array_equal(t.points[:, 1], np.zeros(8))

    def test_cancellation(self):
        a = ts.ActionSequence(np.array([(0.5, 0.1), (-0.5, -0.1)] + [(0.0, 0.0)] * 6))
        t = ts.to_trajectory(a)
        np.testing.assert_allclose(t.points[0], (0.5, 0.1))
        np.testing.assert_allclose(t.points[1:], np.zeros((7, 2)), atol=1e-16)

    def test_round_trip_exact_on_representable(self):
        t = traj(np.arange(16, dtype=float).reshape(8, 2) * 0.25)
        back = ts.to_trajectory(ts.to_actions(t))
        np.testing.assert_array_equal(back.points, t.points)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-190, 190, allow_nan=False, width=32), min_size=16, max_size=16))
    def test_round_trip_property(self, values):
        t = traj(np.array(values).reshape(8, 2))
        back = ts.to_trajectory(ts.to_actions(t))
        np.testing.assert_allclose(back.points, t.points, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-50, 50, allow_nan=False, width=32), min_size=16, max_size=16),
        st.floats(-3, 3, allow_nan=False).filter(lambda a: abs(a) > 1e-3),
    )
    def test_linearity(self, values, scale):
        pts = np.array(values).reshape(8, 2)
        a1 = ts.to_actions(traj(pts * scale)).deltas
        a2 = ts.to_actions(traj(pts)).deltas * scale
        np.testing.assert_allclose(a1, a2, rtol=1e-12, atol=1e-12)


class TestValidation:
    def test_wrong_length(self):
        with pytest.raises(ValueError):
            ts.Trajectory(np.zeros((7, 2)))

    def test_non_finite(self):
        pts = np.zeros((8, 2))
        pts[3, 1] = np.nan
        with pytest.raises(ValueError):
            ts.Trajectory(pts)

    def test_out_of_bounds(self):
        pts = np.zeros((8, 2))
        pts[0, 0] = 201.0
        with pytest.raises(ValueError):
            ts.Trajectory(pts)

    def test_points_are_immutable(self):
        t = traj(np.zeros((8, 2)))
        with pytest.raises(ValueError):
            t.points[0, 0] = 1.0


class TestKinematics:
    def test_constant_speed_profile(self):
        t = traj([(2.0 * (k + 1), 0.0) for k in range(8)])
        prof = ts.motion_profile(t, initial_speed=4.0)
        np.testing.assert_allclose(prof.speeds, 4.0)
        np.testing.assert_allclose(prof.accelerations, 0.0, atol=1e-12)
        np.testing.assert_allclose(prof.jerks, 0.0, atol=1e-12)
        np.testing.assert_allclose(prof.yaw_rates, 0.0, atol=1e-12)

    def test_stationary_with_zero_initial_speed(self):
        prof = ts.motion_profile(traj(np.zeros((8, 2))), initial_speed=0.0)
        np.testing.assert_allclose(prof.accelerations, 0.0)
        np.testing.assert_allclose(prof.yaw_rates, 0.0)

    def test_braking_shows_in_accelerations(self):
        # 10 m/s initial speed, full stop at the first waypoint
        prof = ts.motion_profile(traj(np.zeros((8, 2))), initial_speed=10.0)
        assert abs(prof.accelerations[0, 0] + 20.0) < 1e-9

    def test_menger_curvature_of_circle(self):
        r = 20.0
        ang = np.linspace(0, 1.0, 12)
        pts = np.stack([r * np.sin(ang), r * (1 - np.cos(ang))], axis=1)
        kappa = ts.menger_curvature(pts)
        np.testing.assert_allclose(kappa, 1.0 / r, rtol=1e-3)

    def test_menger_degenerate_segments_are_zero(self):
        pts = np.array([[0.0, 0.0], [0.001, 0.0], [0.0, 0.001], [1.0, 0.0]])
        kappa = ts.menger_curvature(pts)
        assert kappa[0] == 0.0
