import numpy as np

from diffplan import featenc as fe, gradcore as gc, scenesim as sim
from util import check_gradients

SMALL = fe.ModelConfig(dim=12, heads=2, ff_dim=16, raster_size=8, patch_size=4)


class TestRasterize:
    def test_empty_straight_scene_has_no_occupancy(self):
        scene = sim.SceneSpec(0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 10.0, ())
        raster = fe.rasterize(scene)
        assert raster.shape == (32, 32, 3)
        assert raster[:, :, 1].max() == 0.0
        assert raster[:, :, 2].max() == 0.0

    def test_obstacle_covering_cell_center_marks_occupancy(self):
        cfg = fe.ModelConfig()
        res = cfg.window / cfg.raster_size
        center = (-cfg.window / 2 + 10.5 * res, -cfg.window / 2 + 20.5 * res)
        obs = sim.Obstacle(center, 0.0, (0.5, 0.5), (4.0, 0.0))
        scene = sim.SceneSpec(0, "straight", np.stack([np.arange(0.0, 96.0, 2.0), np.zeros(48)], 1), 3.0, 10.0, (obs,))
        raster = fe.rasterize(scene)
        assert raster[10, 20, 1] == 1.0
        assert abs(raster[10, 20, 2] - 4.0 / 20.0) < 1e-7

    def test_drivable_channel_matches_point_predicate(self):
        scene = sim.generate_scene(3, "curve")
        cfg = fe.ModelConfig()
        raster = fe.rasterize(scene, cfg)
        res = cfg.window / cfg.raster_size
        for i in range(0, cfg.raster_size, 5):
            for j in range(0, cfg.raster_size, 5):
                cx = -cfg.window / 2 + (i + 0.5) * res
                cy = -cfg.window / 2 + (j + 0.5) * res
                assert raster[i, j, 0] == float(sim.point_in_drivable(scene, (cx, cy)))

    def test_values_in_unit_range(self):
        scene = sim.generate_scene(5, "intersection")
        raster = fe.rasterize(scene)
        assert raster.min() >= 0.0 and raster.max() <= 1.0

    def test_deterministic(self):
        scene = sim.generate_scene(4, "lane_change")
        np.testing.assert_array_equal(fe.rasterize(scene), fe.rasterize(scene))


class TestSceneTokens:
    def test_zero_raster_zero_bias_gives_positional_embeddings(self):
        store = gc.ParamStore()
        fe.init_encoder_params(store, SMALL, np.random.default_rng(0), dtype=np.float64)
        patches = np.zeros((2, SMALL.n_tokens, SMALL.patch_dim))
        tokens = fe.encode_scene(gc.Tensor(patches), store, SMALL)
        for b in range(2):
            np.testing.assert_array_equal(tokens.data[b], store["enc.scene.pos"].data)

    def test_patch_permutation_shifts_tokens_consistently(self):
        store = gc.ParamStore()
        fe.init_encoder_params(store, SMALL, np.random.default_rng(0), dtype=np.float64)
        rng = np.random.default_rng(1)
        patches = rng.normal(size=(1, SMALL.n_tokens, SMALL.patch_dim))
        perm = rng.permutation(SMALL.n_tokens)
        t1 = fe.encode_scene(gc.Tensor(patches), store, SMALL).data[0]
        t2 = fe.encode_scene(gc.Tensor(patches[:, perm]), store, SMALL).data[0]
        pos = store["enc.scene.pos"].data
        np.testing.assert_allclose(t2 - pos, (t1 - pos)[perm], rtol=1e-12)

    def test_patchify_layout(self):
        cfg = SMALL
        raster = np.arange(cfg.raster_size**2 * 3, dtype=np.float64).reshape(cfg.raster_size, cfg.raster_size, 3)
        patches = fe.patchify(raster, cfg)
        assert patches.shape == (cfg.n_tokens, cfg.patch_dim)
        p = cfg.patch_size
        np.testing.assert_array_equal(patches[0], raster[:p, :p].reshape(-1))
        np.testing.assert_array_equal(patches[1], raster[:p, p : 2 * p].reshape(-1))


class TestMLPEncoders:
    def test_zero_history_zero_biases_gives_zero_embedding(self):
        store = gc.ParamStore()
        fe.init_encoder_params(store, SMALL, np.random.default_rng(0), dtype=np.float64)
        emb = fe.encode_action_history(gc.Tensor(np.zeros((3, 8))), store)
        np.testing.assert_array_equal(emb.data, np.zeros((3, SMALL.dim)))

    def test_deterministic_given_params(self):
        store = gc.ParamStore()
        fe.init_encoder_params(store, SMALL, np.random.default_rng(0))
        x = np.random.default_rng(2).normal(size=(2, 8)).astype(np.float32)
        e1 = fe.encode_action_history(gc.Tensor(x), store).data
        e2 = fe.encode_action_history(gc.Tensor(x), store).data
        np.testing.assert_array_equal(e1, e2)

    def test_ego_vector_layout(self):
        v = fe.ego_vector(sim.EgoStatus(7.0, -1.0, "right"))
        np.testing.assert_array_equal(v, [7.0, -1.0, 0.0, 0.0, 1.0])

    def test_encoder_gradients_pass_finite_differences(self):
        rng = np.random.default_rng(3)
        store = gc.ParamStore()
        fe.init_encoder_params(store, SMALL, rng, dtype=np.float64)
        hist = gc.Tensor(rng.normal(size=(4, 8)))
        ego = gc.Tensor(rng.normal(size=(4, 5)))
        target = gc.Tensor(rng.normal(size=(4, SMALL.dim)))

        def loss():
            out = fe.encode_action_history(hist, store) + fe.encode_ego(ego, store)
            return gc.mse(out, target)

        check_gradients(loss, store, h=1e-4, rtol=1e-4)


class TestTrainingStep:
    def test_all_encoder_params_receive_nonzero_gradients(self):
        from diffplan import decorr, diffusion
        from diffplan.denoiser import init_params

        cfg = SMALL
        store = init_params(cfg, seed=0)
        records = sim.make_dataset(4, seed=3)
        inputs = fe.stack_inputs(records, cfg)
        actions = np.stack([np.diff(np.vstack([np.zeros((1, 2)), r.expert.points]), axis=0) for r in records])
        sched = diffusion.build_schedule(10)
        feat = fe.encode_feature_group(inputs["patches"], inputs["history"], inputs["ego"], store, cfg)
        loss, m = diffusion.diff_loss(actions, feat, store, cfg, sched, np.random.default_rng(0))
        total = decorr.combined_loss(loss, decorr.decorr_loss(m), 0.02)
        store.zero_grad()
        gc.backward(total)
        for name, p in store.items():
            if name.startswith("enc."):
                assert p.grad is not None and np.abs(p.grad).max() > 0, name

    def test_feature_group_deterministic(self):
        from diffplan.denoiser import init_params

        cfg = SMALL
        store = init_params(cfg, seed=0)
        records = sim.make_dataset(2, seed=4)
        inputs = fe.stack_inputs(records, cfg)
        f1 = fe.encode_feature_group(inputs["patches"], inputs["history"], inputs["ego"], store, cfg)
        f2 = fe.encode_feature_group(inputs["patches"], inputs["history"], inputs["ego"], store, cfg)
        np.testing.assert_array_equal(f1.scene_tokens.data, f2.scene_tokens.data)
        np.testing.assert_array_equal(f1.emb_action.data, f2.emb_action.data)
        np.testing.assert_array_equal(f1.emb_ego.data, f2.emb_ego.data)
