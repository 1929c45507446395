import csv
import os

import numpy as np
import pytest

from diffplan import cli, scenesim as sim
from diffplan.trajspace import Trajectory

TINY = dict(n_episodes=40, epochs=3, batch=16, n_candidates=4)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset plus a short training run, shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    cfg = cli.RunConfig(seed=5, dataset=str(root / "data"), out=str(root / "out"), **TINY)
    cli.cmd_gen_data(cfg)
    train_out = cli.cmd_train(cfg)
    return cfg, train_out


class TestConfig:
    def test_round_trip(self):
        cfg = cli.RunConfig(seed=3, T=5, beta=0.1, placement="inner", dataset="somewhere")
        assert cli.parse_config(cli.serialize_config(cfg)) == cfg

    def test_defaults(self):
        cfg = cli.RunConfig()
        assert (cfg.T, cfg.batch, cfg.beta, cfg.n_candidates, cfg.max_lr) == (10, 64, 0.02, 30, 1e-4)

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("bogus = 3\n")

    def test_bad_value_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("T = fast\n")

    def test_comments_and_blanks_ignored(self):
        cfg = cli.parse_config("# comment\n\nT = 5  # trailing\n")
        assert cfg.T == 5

    def test_cli_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("T = 5\nbeta = 0.1\n")
        cfg = cli.load_config(str(path), {"beta": 0.02})
        assert cfg.T == 5 and cfg.beta == 0.02

    def test_invalid_placement_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.RunConfig(placement="sideways")


class TestGenData:
    def test_split_sizes_sum(self, workspace):
        cfg, _ = workspace
        counts = cli.split_counts(cfg.n_episodes)
        assert sum(counts.values()) == cfg.n_episodes
        for name, n in counts.items():
            records = sim.load_dataset(os.path.join(cfg.dataset, f"{name}.jsonl"))
            assert len(records) == n

    def test_deterministic_rerun(self, tmp_path):
        cfg = cli.RunConfig(seed=9, dataset=str(tmp_path / "a"), n_episodes=12)
        cli.cmd_gen_data(cfg)
        cfg2 = cli.RunConfig(seed=9, dataset=str(tmp_path / "b"), n_episodes=12)
        cli.cmd_gen_data(cfg2)
        for name in ("train", "val", "test"):
            a = (tmp_path / "a" / f"{name}.jsonl").read_bytes()
            b = (tmp_path / "b" / f"{name}.jsonl").read_bytes()
            assert a == b

    def test_no_seed_collisions_between_splits(self, workspace):
        cfg, _ = workspace
        seeds = {}
        for name in ("train", "val", "test"):
            records = sim.load_dataset(os.path.join(cfg.dataset, f"{name}.jsonl"))
            seeds[name] = {r.scene.seed for r in records}
        assert not (seeds["train"] & seeds["test"])
        assert not (seeds["train"] & seeds["val"])
        assert not (seeds["val"] & seeds["test"])


class TestTrain:
    def test_artifacts_exist(self, workspace):
        cfg, out = workspace
        assert os.path.exists(out["best"])
        assert os.path.exists(out["last"])
        rows = list(csv.DictReader(open(out["log"])))
        assert len(rows) == cfg.epochs

    def test_losses_finite(self, workspace):
        _, out = workspace
        for row in csv.DictReader(open(out["log"])):
            assert np.isfinite(float(row["train_l_diff"]))
            assert np.isfinite(float(row["val_l_diff"]))
            assert np.isfinite(float(row["train_l_rep"]))

    def test_beta_zero_still_logs_penalty(self, tmp_path, workspace):
        cfg, _ = workspace
        zero = cli.RunConfig(seed=5, dataset=cfg.dataset, out=str(tmp_path / "b0"),
                             beta=0.0, **{k: v for k, v in TINY.items() if k != "n_episodes"},
                             n_episodes=cfg.n_episodes)
        out = cli.cmd_train(zero)
        rows = list(csv.DictReader(open(out["log"])))
        assert all(float(r["train_l_rep"]) > 0 for r in rows)

    def test_resume_reproduces_bit_exactly(self, tmp_path, workspace):
        # an interrupted run plus --resume must replay the uninterrupted run
        cfg, _ = workspace
        base = dict(seed=7, dataset=cfg.dataset, n_episodes=cfg.n_episodes, batch=16, n_candidates=4, epochs=3)
        full = cli.RunConfig(out=str(tmp_path / "full"), **base)
        cli.cmd_train(full)
        part = cli.RunConfig(out=str(tmp_path / "part"), **base)
        cli.cmd_train(part, stop_after=2)
        cli.cmd_train(part, resume=True)
        log_full = (tmp_path / "full" / "train_log.csv").read_text()
        log_part = (tmp_path / "part" / "train_log.csv").read_text()
        assert log_full == log_part
        a = (tmp_path / "full" / "checkpoint_last.bin").read_bytes()
        b = (tmp_path / "part" / "checkpoint_last.bin").read_bytes()
        assert a == b

    def test_checkpoint_round_trip(self, workspace):
        _, out = workspace
        store, norm, model_cfg, T, epochs_done, best_val = cli.load_checkpoint(out["best"])
        assert T == 10
        assert store.param_count() == out["param_count"]
        assert norm.std.shape == (2,)
        assert epochs_done >= 1


class TestEval:
    def test_metrics_csv_schema(self, workspace, tmp_path):
        cfg, out = workspace
        res = cli.cmd_eval(cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "ev")}), out["best"])
        rows = list(csv.reader(open(res["path"])))
        assert rows[0] == cli.METRICS_HEADER
        counts = cli.split_counts(cfg.n_episodes)
        assert len(rows) == counts["test"] + 2  # header + samples + mean row
        assert rows[-1][0] == "mean"

    def test_rerun_byte_identical(self, workspace, tmp_path):
        cfg, out = workspace
        c1 = cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "e1")})
        c2 = cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "e2")})
        p1 = cli.cmd_eval(c1, out["best"])["path"]
        p2 = cli.cmd_eval(c2, out["best"])["path"]
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_single_candidate_has_zero_diversity(self, workspace, tmp_path):
        cfg, out = workspace
        c = cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "n1"), "n_candidates": 1})
        res = cli.cmd_eval(c, out["best"])
        for row in csv.DictReader(open(res["path"])):
            assert float(row["D"]) == 0.0

    def test_baseline_mode(self, workspace, tmp_path):
        cfg, _ = workspace
        c = cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "bl")})
        res = cli.cmd_eval(c, None, baseline=True)
        assert os.path.basename(res["path"]) == "metrics_baseline.csv"
        rows = list(csv.DictReader(open(res["path"])))
        assert all(float(r["D"]) == 0.0 for r in rows)
        assert 0.0 <= float(res["summary"]["PDMS"]) <= 1.0

    def test_eval_without_checkpoint_fails(self, workspace, tmp_path):
        cfg, _ = workspace
        with pytest.raises(cli.ConfigError):
            cli.cmd_eval(cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "x")}), None)


class TestRender:
    def test_scene_only_render(self, workspace, tmp_path):
        cfg, _ = workspace
        path = cli.cmd_render(cfg, 0, None, str(tmp_path / "scene.svg"))
        text = open(path).read()
        assert text.startswith("<svg")
        assert "<polyline" not in text  # no candidates, no polylines
        assert "<polygon" in text

    def test_candidate_count_matches_polylines(self, workspace, tmp_path):
        cfg, out = workspace
        path = cli.cmd_render(cfg, 0, out["best"], str(tmp_path / "cands.svg"))
        text = open(path).read()
        assert text.count("<polyline") == cfg.n_candidates

    def test_byte_identical_rerun(self, workspace, tmp_path):
        cfg, out = workspace
        p1 = cli.cmd_render(cfg, 1, out["best"], str(tmp_path / "r1.svg"))
        p2 = cli.cmd_render(cfg, 1, out["best"], str(tmp_path / "r2.svg"))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_render_svg_n30_polyline_count(self):
        # parse-and-count oracle straight over the renderer output
        scene = sim.generate_scene(0, "straight")
        rng = np.random.default_rng(0)
        cands = [
            Trajectory(np.cumsum(np.abs(rng.normal(2.0, 0.5, (8, 2))) * [1.0, 0.02], axis=0))
            for _ in range(30)
        ]
        text = cli.render_svg(scene, cands, selected=3)
        assert text.count("<polyline") == 30


class TestSweep:
    def test_placement_axis_smoke(self, workspace, tmp_path):
        cfg, _ = workspace
        sub = cli.RunConfig(**{**cfg.__dict__, "out": str(tmp_path / "sw"), "epochs": 2})
        path = cli.cmd_sweep(sub, "placement")
        rows = list(csv.DictReader(open(path)))
        assert [r["value"] for r in rows] == ["outer", "inner"]
        for row in rows:
            assert 0.0 <= float(row["PDMS"]) <= 1.0
            assert 0.0 <= float(row["D"]) < 1.0

    def test_unknown_axis_rejected(self, workspace):
        cfg, _ = workspace
        with pytest.raises(cli.ConfigError):
            cli.cmd_sweep(cfg, "width")

    def test_documented_grid_values(self):
        assert cli.SWEEP_AXES["T"] == (5, 10, 20)
        assert cli.SWEEP_AXES["batch"] == (32, 64, 128)
        assert cli.SWEEP_AXES["beta"] == (0.0, 0.02, 0.05, 0.1)
        assert cli.SWEEP_AXES["N"] == (10, 15, 30)
        assert cli.SWEEP_AXES["placement"] == ("outer", "inner")


class TestMainEntry:
    def test_missing_dataset_exit_code(self, tmp_path):
        code = cli.main(["train", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 3

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("placement = diagonal\n")
        code = cli.main(["train", "--config", str(bad)])
        assert code == 2

    def test_gen_data_via_main(self, tmp_path, capsys):
        code = cli.main(["gen-data", "--n-episodes", "8", "--dataset", str(tmp_path / "d"), "--seed", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "episodes" in out
