import numpy as np
import pytest

from diffplan import scenesim as sim
from diffplan.trajspace import Waypoint, menger_curvature, motion_profile, polyline_arclength


class TestSceneGeneration:
    def test_straight_scene_runs_along_x(self):
        scene = sim.generate_scene(0, "straight")
        np.testing.assert_allclose(scene.centerline[:, 1], 0.0, atol=1e-12)
        assert scene.centerline[0, 0] == 0.0

    @pytest.mark.parametrize("kind", sim.KINDS)
    def test_determinism(self, kind):
        a = sim.generate_scene(11, kind)
        b = sim.generate_scene(11, kind)
        np.testing.assert_array_equal(a.centerline, b.centerline)
        assert a.corridor_half_width == b.corridor_half_width
        assert a.speed_limit == b.speed_limit
        assert len(a.obstacles) == len(b.obstacles)
        for oa, ob in zip(a.obstacles, b.obstacles):
            np.testing.assert_array_equal(oa.center, ob.center)
            np.testing.assert_array_equal(oa.velocity, ob.velocity)

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_curve_has_monotone_arclength_and_bounded_curvature(self, seed):
        scene = sim.generate_scene(seed, "curve")
        seg = np.hypot(*np.diff(scene.centerline, axis=0).T)
        assert np.all(seg > 0)
        kappa = menger_curvature(scene.centerline)
        assert np.abs(kappa).max() <= 0.2

    @pytest.mark.parametrize("kind", sim.KINDS)
    def test_obstacles_clear_of_origin(self, kind):
        for seed in range(8):
            scene = sim.generate_scene(seed, kind)
            for obs in scene.obstacles:
                assert not sim.rects_overlap((0, 0), 0.0, sim.EGO_HALF, obs.center, obs.heading, obs.half_extent)

    def test_invalid_kind(self):
        with pytest.raises(ValueError):
            sim.generate_scene(0, "roundabout")


class TestDrivable:
    def setup_method(self):
        self.scene = sim.generate_scene(0, "straight")

    def test_origin_is_drivable(self):
        assert sim.point_in_drivable(self.scene, Waypoint(0.0, 0.0))

    def test_outside_by_construction(self):
        hw = self.scene.corridor_half_width
        assert not sim.point_in_drivable(self.scene, (10.0, hw + 1.0))

    def test_boundary_is_closed(self):
        hw = self.scene.corridor_half_width
        assert sim.point_in_drivable(self.scene, (10.0, hw))


class TestCollision:
    def test_no_obstacles_never_collides(self):
        scene = sim.SceneSpec(0, "straight", np.stack([np.arange(20.0), np.zeros(20)], 1), 3.0, 10.0, ())
        for pose in [(0, 0, 0), (5, 1, 0.3), (19, -2, 1.0)]:
            assert not sim.collision_at(scene, pose, 2.0)

    def test_centered_on_static_obstacle(self):
        obs = sim.Obstacle((8.0, 0.0), 0.0, (1.0, 1.0), (0.0, 0.0))
        scene = sim.SceneSpec(0, "straight", np.stack([np.arange(20.0), np.zeros(20)], 1), 3.0, 10.0, (obs,))
        assert sim.collision_at(scene, (8.0, 0.0, 0.0), 0.0)

    def test_moving_obstacle_meets_ego_at_t2(self):
        # obstacle starts 10 m ahead moving backwards at 5 m/s: centers meet at t=2
        obs = sim.Obstacle((10.0, 0.0), 0.0, (1.0, 0.5), (-5.0, 0.0))
        scene = sim.SceneSpec(0, "straight", np.stack([np.arange(20.0), np.zeros(20)], 1), 3.0, 10.0, (obs,))
        assert not sim.collision_at(scene, (0.0, 0.0, 0.0), 0.0)
        assert sim.collision_at(scene, (0.0, 0.0, 0.0), 2.0)

    def test_sat_agrees_with_dense_point_sampling(self):
        # oracle: 10^4 sampled points per rectangle, tested in both directions
        rng = np.random.default_rng(123)
        grid = np.linspace(-1.0, 1.0, 100)
        gx, gy = np.meshgrid(grid, grid)
        unit = np.stack([gx.ravel(), gy.ravel()], axis=1)

        def sampled_overlap(c1, h1, e1, c2, h2, e2):
            def pts_of(c, h, e):
                rot = np.array([[np.cos(h), -np.sin(h)], [np.sin(h), np.cos(h)]])
                return np.asarray(c) + (unit * e) @ rot.T

            return bool(
                sim.points_in_rect(pts_of(c1, h1, e1), c2, h2, e2).any()
                or sim.points_in_rect(pts_of(c2, h2, e2), c1, h1, e1).any()
            )

        for _ in range(100):
            c1 = rng.uniform(-4, 4, 2)
            c2 = rng.uniform(-4, 4, 2)
            h1, h2 = rng.uniform(0, np.pi, 2)
            e1 = rng.uniform(0.5, 2.5, 2)
            e2 = rng.uniform(0.5, 2.5, 2)
            assert sim.rects_overlap(c1, h1, e1, c2, h2, e2) == sampled_overlap(c1, h1, e1, c2, h2, e2)

    def test_vectorized_sat_matches_scalar(self):
        rng = np.random.default_rng(7)
        n = 200
        c1 = rng.uniform(-5, 5, (n, 2))
        c2 = rng.uniform(-5, 5, (n, 2))
        h1 = rng.uniform(0, np.pi, n)
        h2 = rng.uniform(0, np.pi, n)
        e1 = rng.uniform(0.3, 2.5, (n, 2))
        e2 = rng.uniform(0.3, 2.5, (n, 2))
        vec = sim.rects_overlap_many(c1, h1, e1, c2, h2, e2)
        ref = np.array([sim.rects_overlap(c1[i], h1[i], e1[i], c2[i], h2[i], e2[i]) for i in range(n)])
        np.testing.assert_array_equal(vec, ref)


class TestExpert:
    def test_constant_velocity_on_empty_straight(self):
        scene = sim.SceneSpec(
            0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 10.0, ()
        )
        ego = sim.EgoStatus(10.0, 0.0, "follow")
        traj = sim.expert_trajectory(scene, ego)
        expected_x = 5.0 * np.arange(1, 9)
        np.testing.assert_allclose(traj.points[:, 0], expected_x, atol=0.05)
        np.testing.assert_allclose(traj.points[:, 1], 0.0, atol=1e-6)

    def test_decelerates_before_wall(self):
        wall = sim.Obstacle((10.0, 0.0), np.pi / 2, (2.5, 0.5), (0.0, 0.0))
        scene = sim.SceneSpec(
            0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 10.0, (wall,)
        )
        ego = sim.EgoStatus(5.0, 0.0, "follow")
        traj = sim.expert_trajectory(scene, ego)
        prof = motion_profile(traj, ego.velocity)
        assert prof.accelerations[:, 0].min() < -0.3  # actually brakes
        assert traj.points[-1, 0] < 10.0 - 0.5 - sim.EGO_LENGTH / 2.0  # stops short of the wall
        assert prof.speeds[-1] < 0.5

    def test_standing_start_makes_monotone_comfortable_progress(self):
        scene = sim.SceneSpec(
            0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 12.0, ()
        )
        ego = sim.EgoStatus(0.0, 0.0, "follow")
        traj = sim.expert_trajectory(scene, ego)
        assert np.all(np.diff(traj.points[:, 0]) > 0)
        prof = motion_profile(traj, 0.0)
        assert np.hypot(*prof.accelerations.T).max() <= 3.0
        assert np.hypot(*prof.jerks.T).max() <= 5.0

    def test_infeasible_when_boxed_in(self):
        # walls immediately ahead with a fast initial speed leave no escape
        walls = tuple(
            sim.Obstacle((4.5, y), np.pi / 2, (2.9, 1.2), (0.0, 0.0)) for y in (-1.5, 1.5)
        )
        scene = sim.SceneSpec(
            0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 15.0, walls
        )
        with pytest.raises(sim.InfeasibleScene):
            sim.expert_trajectory(scene, sim.EgoStatus(15.0, 0.0, "follow"))


class TestDataset:
    def test_determinism(self):
        a = sim.make_dataset(2, seed=7)
        b = sim.make_dataset(2, seed=7)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.expert.points, rb.expert.points)
            np.testing.assert_array_equal(ra.history, rb.history)
            assert ra.ego.velocity == rb.ego.velocity

    def test_mix_frequencies_track_weights(self):
        kinds = sim._mix_sequence(1000, None)
        for k in sim.KINDS:
            assert abs(kinds.count(k) - 250) <= 25  # within 10% of the uniform share

    def test_mix_respects_custom_weights(self):
        kinds = sim._mix_sequence(100, {"straight": 3.0, "curve": 1.0})
        assert kinds.count("straight") == 75
        assert kinds.count("curve") == 25

    def test_experts_are_collision_free_along_path(self):
        from diffplan.trajspace import segment_headings

        for rec in sim.make_dataset(6, seed=1):
            pts = rec.expert.with_origin()
            headings = segment_headings(pts)
            for k in range(1, 9):
                pose = (pts[k, 0], pts[k, 1], headings[k - 1])
                assert not sim.collision_at(rec.scene, pose, k * 0.5)

    def test_history_is_behind_and_chronological(self):
        for rec in sim.make_dataset(4, seed=2):
            assert np.all(rec.history[:, 0] <= 1e-9)
            assert np.all(np.diff(rec.history[:, 0]) >= -1e-9)

    def test_serialization_round_trip(self, tmp_path):
        records = sim.make_dataset(3, seed=5)
        p = tmp_path / "ds.jsonl"
        sim.save_dataset(p, records)
        loaded = sim.load_dataset(p)
        p2 = tmp_path / "ds2.jsonl"
        sim.save_dataset(p2, loaded)
        assert p.read_bytes() == p2.read_bytes()

    def test_expert_labels_inside_corridor(self):
        for rec in sim.make_dataset(4, seed=9):
            dists = sim.distance_to_polyline(rec.expert.points, rec.scene.centerline)
            assert np.all(dists <= rec.scene.corridor_half_width)


class TestValidation:
    def test_ego_status_bounds(self):
        with pytest.raises(ValueError):
            sim.EgoStatus(25.0, 0.0, "follow")
        with pytest.raises(ValueError):
            sim.EgoStatus(5.0, 9.0, "follow")
        with pytest.raises(ValueError):
            sim.EgoStatus(5.0, 0.0, "reverse")

    def test_scene_invariants_enforced(self):
        line = np.stack([np.arange(20.0), np.zeros(20)], 1)
        with pytest.raises(ValueError):
            sim.SceneSpec(0, "straight", line[:10], 3.0, 10.0, ())
        with pytest.raises(ValueError):
            sim.SceneSpec(0, "straight", line, 1.0, 10.0, ())
        with pytest.raises(ValueError):
            sim.SceneSpec(0, "straight", line, 3.0, 30.0, ())
        shifted = line + np.array([1.0, 0.0])
        with pytest.raises(ValueError):
            sim.SceneSpec(0, "straight", shifted, 3.0, 10.0, ())

    def test_obstacle_bounds(self):
        with pytest.raises(ValueError):
            sim.Obstacle((0, 0), 0.0, (0.0, 1.0), (0, 0))
        with pytest.raises(ValueError):
            sim.Obstacle((0, 0), 0.0, (1.0, 1.0), (25.0, 0.0))
