"""Command-line entry points: gen-data, train, eval, sweep, render.

Configuration is a flat ``key = value`` text file plus command-line
overrides (CLI > file > defaults).  Every command is deterministic given
(config, seed): re-running produces byte-identical outputs, so CSV and SVG
files never embed timestamps.

Exit codes: 0 success, 2 configuration error, 3 missing/unreadable file,
4 infeasible scene generation, 5 invalid value, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from . import decorr, diffusion, evalsuite, gradcore as gc, scenesim
from .denoiser import init_params
from .featenc import ModelConfig, encode_feature_group, stack_inputs
from .trajspace import DT, HORIZON, Trajectory

SPECTRUM_TOP_K = 16


class ConfigError(ValueError):
    """Bad configuration key or value."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: str = "data"
    T: int = 10
    batch: int = 64
    beta: float = 0.02
    n_candidates: int = 30
    # stand-in step budget for the reference 120-epoch schedule at desk scale
    epochs: int = 40
    max_lr: float = 1e-4
    placement: str = "outer"  # outer | inner | off
    out: str = "out"
    n_episodes: int = 2000
    post_filter_diversity: bool = False

    def __post_init__(self):
        if self.placement not in ("outer", "inner", "off"):
            raise ConfigError(f"placement must be outer/inner/off, got {self.placement!r}")
        if self.T < 1 or self.batch < 1 or self.n_candidates < 1 or self.epochs < 1:
            raise ConfigError("T, batch, n_candidates and epochs must be positive")
        if self.beta < 0 or self.max_lr <= 0:
            raise ConfigError("beta must be >= 0 and max_lr > 0")


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)!r}" if isinstance(getattr(cfg, f.name), str)
             else f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    kwargs = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        current = getattr(defaults, key)
        try:
            if isinstance(current, bool):
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                kwargs[key] = int(value)
            elif isinstance(current, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value.strip("'\"")
        except ValueError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    return RunConfig(**kwargs)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = RunConfig()
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **clean) if clean else cfg


# -- dataset generation -------------------------------------------------------

SPLITS = (("train", 0, 0.8), ("val", 1, 0.1), ("test", 2, 0.1))


def split_counts(n: int) -> dict:
    if n < 3:
        raise ConfigError("need at least 3 episodes for train/val/test splits")
    n_val = max(1, int(n * 0.1))
    n_test = max(1, n - int(n * 0.8) - n_val)
    return {"train": n - n_val - n_test, "val": n_val, "test": n_test}


def cmd_gen_data(cfg: RunConfig) -> dict:
    """Write train/val/test JSON Lines files; returns the split paths."""
    counts = split_counts(cfg.n_episodes)
    os.makedirs(cfg.dataset, exist_ok=True)
    paths = {}
    for name, code, _ in SPLITS:
        # disjoint per-split seed roots keep scene seeds collision-free
        records = scenesim.make_dataset(counts[name], seed=cfg.seed * 8 + code)
        path = os.path.join(cfg.dataset, f"{name}.jsonl")
        scenesim.save_dataset(path, records)
        paths[name] = path
    return paths


# -- checkpoint assembly --------------------------------------------------------


def save_checkpoint(path, store: gc.ParamStore, norm: diffusion.NormStats, model_cfg: ModelConfig,
                    T: int, epochs_done: int, best_val: float) -> None:
    tensors = {f"p.{name}": t.data for name, t in store.items()}
    for name in store.m:
        tensors[f"m.{name}"] = store.m[name]
        tensors[f"v.{name}"] = store.v[name]
    tensors["norm.mean"] = norm.mean
    tensors["norm.std"] = norm.std
    tensors["meta.model"] = model_cfg.as_array()
    tensors["meta.state"] = np.array([T, epochs_done, store.step_count], dtype=np.int64)
    tensors["meta.best_val"] = np.array([best_val], dtype=np.float64)
    gc.save_tensors(path, tensors)


def load_checkpoint(path):
    tensors = gc.load_tensors(path)
    model_cfg = ModelConfig.from_array(tensors["meta.model"])
    store = gc.ParamStore()
    for name, arr in tensors.items():
        if name.startswith("p."):
            store.add(name[2:], arr)
    for name in store.names():
        if f"m.{name}" in tensors:
            store.m[name] = tensors[f"m.{name}"].copy()
            store.v[name] = tensors[f"v.{name}"].copy()
    T, epochs_done, step_count = (int(v) for v in tensors["meta.state"])
    store.step_count = step_count
    norm = diffusion.NormStats(tensors["norm.mean"], tensors["norm.std"])
    best_val = float(tensors["meta.best_val"][0])
    return store, norm, model_cfg, T, epochs_done, best_val


# -- training --------------------------------------------------------------------


def _load_split(cfg: RunConfig, name: str):
    path = os.path.join(cfg.dataset, f"{name}.jsonl")
    records = scenesim.load_dataset(path)
    if not records:
        raise FileNotFoundError(f"empty split {path}")
    return records


def _actions_of(records) -> np.ndarray:
    from .trajspace import to_actions

    return np.stack([to_actions(r.expert).deltas for r in records])


def _epoch_rng(seed: int, tag: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([0x7A11, seed, tag, epoch]))


def _eval_l_diff(store, model_cfg, sched, inputs, actions_norm, rng, m_tap, chunk: int = 256):
    """Mean denoising loss over a split, graph-free."""
    n = len(actions_norm)
    total = 0.0
    with gc.no_grad():
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            feat = encode_feature_group(
                inputs["patches"][lo:hi], inputs["history"][lo:hi], inputs["ego"][lo:hi], store, model_cfg
            )
            loss, _ = diffusion.diff_loss(actions_norm[lo:hi], feat, store, model_cfg, sched, rng, m_tap=m_tap)
            total += float(loss.data) * (hi - lo)
    return total / n


def _probe_representation(store, model_cfg, sched, inputs, actions_norm, rng, m_tap, max_b: int = 64):
    b = min(max_b, len(actions_norm))
    with gc.no_grad():
        feat = encode_feature_group(
            inputs["patches"][:b], inputs["history"][:b], inputs["ego"][:b], store, model_cfg
        )
        _, m = diffusion.diff_loss(actions_norm[:b], feat, store, model_cfg, sched, rng, m_tap=m_tap)
    return m.data


def cmd_train(cfg: RunConfig, resume: bool = False, stop_after: int | None = None) -> dict:
    """Train the planner; writes train_log.csv plus best/last checkpoints.

    ``stop_after`` ends the run early after that many epochs while keeping
    the full-length learning-rate schedule, mimicking an interrupted run
    that --resume can continue.
    """
    train = _load_split(cfg, "train")
    val = _load_split(cfg, "val")
    os.makedirs(cfg.out, exist_ok=True)

    model_cfg = ModelConfig()
    m_tap = "inner" if cfg.placement == "inner" else "outer"
    beta = 0.0 if cfg.placement == "off" else cfg.beta

    last_path = os.path.join(cfg.out, "checkpoint_last.bin")
    best_path = os.path.join(cfg.out, "checkpoint_best.bin")
    log_path = os.path.join(cfg.out, "train_log.csv")

    with open(os.path.join(cfg.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))

    train_inputs = stack_inputs(train, model_cfg)
    val_inputs = stack_inputs(val, model_cfg)
    train_actions = _actions_of(train)
    val_actions = _actions_of(val)

    if resume:
        store, norm, model_cfg, ckpt_t, start_epoch, best_val = load_checkpoint(last_path)
        if ckpt_t != cfg.T:
            raise ConfigError(f"checkpoint was trained with T={ckpt_t}, config has T={cfg.T}")
        with open(log_path, "r", encoding="utf-8") as fh:
            log_lines = fh.read().splitlines()
        log_lines = log_lines[: 1 + start_epoch]
    else:
        store = init_params(model_cfg, cfg.seed)
        norm = diffusion.fit_normalization(train_actions)
        start_epoch = 0
        best_val = float("inf")
        header = ["epoch", "lr", "train_l_diff", "train_l_rep", "val_l_diff", "mean_abs_offdiag"]
        header += [f"sv{i:02d}" for i in range(1, SPECTRUM_TOP_K + 1)]
        log_lines = [",".join(header)]

    sched = diffusion.build_schedule(cfg.T)
    actions_norm = norm.normalize(train_actions).astype(np.float32)
    val_actions_norm = norm.normalize(val_actions).astype(np.float32)

    n_train = len(train)
    steps_per_epoch = max(1, (n_train + cfg.batch - 1) // cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch

    end_epoch = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start_epoch, end_epoch):
        rng = _epoch_rng(cfg.seed, 1, epoch)
        perm = rng.permutation(n_train)
        sum_diff = sum_rep = 0.0
        lr = 0.0
        for b in range(steps_per_epoch):
            idx = perm[b * cfg.batch : (b + 1) * cfg.batch]
            if len(idx) == 0:
                continue
            feat = encode_feature_group(
                train_inputs["patches"][idx], train_inputs["history"][idx], train_inputs["ego"][idx],
                store, model_cfg,
            )
            l_diff, m = diffusion.diff_loss(actions_norm[idx], feat, store, model_cfg, sched, rng, m_tap=m_tap)
            l_rep = decorr.decorr_loss(m) if len(idx) >= 2 else gc.Tensor(np.float32(0.0))
            total = decorr.combined_loss(l_diff, l_rep, beta)
            store.zero_grad()
            gc.backward(total)
            lr = gc.onecycle_lr(epoch * steps_per_epoch + b, total_steps, cfg.max_lr)
            gc.adam_step(store, lr)
            sum_diff += float(l_diff.data)
            sum_rep += float(l_rep.data)

        val_rng = _epoch_rng(cfg.seed, 2, epoch)
        val_l = _eval_l_diff(store, model_cfg, sched, val_inputs, val_actions_norm, val_rng, m_tap)
        probe_rng = _epoch_rng(cfg.seed, 3, epoch)
        m_probe = _probe_representation(store, model_cfg, sched, val_inputs, val_actions_norm, probe_rng, m_tap)
        corr = decorr.correlation_matrix(m_probe)
        spectrum = decorr.singular_spectrum(corr, SPECTRUM_TOP_K)
        row = [str(epoch + 1), f"{lr:.10g}", f"{sum_diff / steps_per_epoch:.8g}", f"{sum_rep / steps_per_epoch:.8g}",
               f"{val_l:.8g}", f"{decorr.mean_abs_offdiag(corr):.8g}"]
        row += [f"{v:.8g}" for v in spectrum]
        log_lines.append(",".join(row))

        save_checkpoint(last_path, store, norm, model_cfg, cfg.T, epoch + 1, best_val)
        if val_l < best_val:
            best_val = val_l
            save_checkpoint(best_path, store, norm, model_cfg, cfg.T, epoch + 1, best_val)
            save_checkpoint(last_path, store, norm, model_cfg, cfg.T, epoch + 1, best_val)
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")

    return {"log": log_path, "best": best_path, "last": last_path,
            "param_count": store.param_count(), "best_val": best_val}


# -- evaluation --------------------------------------------------------------------


def constant_velocity_trajectory(ego: scenesim.EgoStatus) -> Trajectory:
    """Straight-ahead extrapolation of the current ego speed."""
    steps = np.arange(1, HORIZON + 1) * DT * ego.velocity
    return Trajectory(np.stack([steps, np.zeros(HORIZON)], axis=1))


METRICS_HEADER = ["sample_id", "NC", "DAC", "EP", "TTC", "Comfort", "PDMS", "D", "N_surviving"]


def _metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(row)
    means = [f"{np.mean([float(r[i]) for r in rows]):.6f}" for i in range(1, len(METRICS_HEADER))]
    writer.writerow(["mean"] + means)
    return buf.getvalue()


def cmd_eval(cfg: RunConfig, checkpoint: str | None, baseline: bool = False) -> dict:
    """Score the test split; writes metrics.csv and returns the summary row."""
    test = _load_split(cfg, "test")
    os.makedirs(cfg.out, exist_ok=True)
    rc = evalsuite.RasterConfig()

    param_count = 0
    if baseline:
        store = norm = model_cfg = sched = None
    else:
        if checkpoint is None:
            raise ConfigError("eval needs --checkpoint unless --baseline is set")
        store, norm, model_cfg, ckpt_t, _, _ = load_checkpoint(checkpoint)
        sched = diffusion.build_schedule(ckpt_t)
        param_count = store.param_count()

    rows = []
    for i, rec in enumerate(test):
        if baseline:
            cands = [constant_velocity_trajectory(rec.ego)]
        else:
            inputs = stack_inputs([rec], model_cfg)
            with gc.no_grad():
                feat = encode_feature_group(inputs["patches"], inputs["history"], inputs["ego"], store, model_cfg)
            root = int(np.random.SeedSequence([0xE7A1, cfg.seed, i]).generate_state(1)[0])
            _, cands = diffusion.sample_candidates(feat, cfg.n_candidates, store, model_cfg, sched, norm, root)
        res = evalsuite.evaluate_candidates(rec, cands, rc, cfg.post_filter_diversity)
        rows.append([str(i), str(res["nc"]), str(res["dac"]), f"{res['ep']:.6f}", str(res["ttc"]),
                     str(res["comfort"]), f"{res['pdms']:.6f}", f"{res['diversity']:.6f}", str(res["n_surviving"])])

    text = _metrics_csv(rows)
    name = "metrics_baseline.csv" if baseline else "metrics.csv"
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    summary = text.strip().splitlines()[-1].split(",")
    return {"path": path, "summary": dict(zip(METRICS_HEADER, summary)), "param_count": param_count}


# -- sweeps -----------------------------------------------------------------------

SWEEP_AXES = {
    "T": (5, 10, 20),
    "batch": (32, 64, 128),
    "beta": (0.0, 0.02, 0.05, 0.1),
    "N": (10, 15, 30),
    "placement": ("outer", "inner"),
}


def cmd_sweep(cfg: RunConfig, axis: str) -> str:
    """Train/evaluate across one sensitivity axis; writes sweep_<axis>.csv."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    base_ckpt = None
    for value in SWEEP_AXES[axis]:
        sub_out = os.path.join(cfg.out, f"sweep_{axis}", str(value))
        sub = replace(cfg, out=sub_out)
        if axis == "T":
            sub = replace(sub, T=int(value))
        elif axis == "batch":
            sub = replace(sub, batch=int(value))
        elif axis == "beta":
            sub = replace(sub, beta=float(value))
        elif axis == "placement":
            sub = replace(sub, placement=str(value))
        else:
            sub = replace(sub, n_candidates=int(value))

        if axis == "N":
            if base_ckpt is None:
                train_out = cmd_train(replace(sub, out=os.path.join(cfg.out, f"sweep_{axis}", "model")))
                base_ckpt = train_out["best"]
            ckpt = base_ckpt
            os.makedirs(sub.out, exist_ok=True)
        else:
            ckpt = cmd_train(sub)["best"]
        summary = cmd_eval(sub, ckpt)["summary"]
        rows.append([axis, str(value), summary["PDMS"], summary["D"], summary["NC"], summary["DAC"],
                     summary["EP"], summary["TTC"], summary["Comfort"]])

    path = os.path.join(cfg.out, f"sweep_{axis}.csv")
    with open(path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis", "value", "PDMS", "D", "NC", "DAC", "EP", "TTC", "Comfort"])
        writer.writerows(rows)
    return path


# -- SVG rendering ------------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _svg_pts(points, tx) -> str:
    return " ".join(f"{_fmt(tx(p)[0])},{_fmt(tx(p)[1])}" for p in points)


def render_svg(scene: scenesim.SceneSpec, candidates, selected: int | None = None,
               expert: Trajectory | None = None, scale: float = 8.0) -> str:
    """Deterministic BEV drawing of a scene plus candidate polylines.

    Candidates are the only <polyline> elements in the file, so counting
    them recovers the candidate count; the selected one is restyled in
    place.  Corridor, obstacles and expert use polygon/path elements.
    """
    _, _, nrm = scenesim._path_frame(scene.centerline)
    left = scene.centerline + scene.corridor_half_width * nrm
    right = scene.centerline - scene.corridor_half_width * nrm

    xs = [left[:, 0], right[:, 0]]
    ys = [left[:, 1], right[:, 1]]
    for t in candidates:
        xs.append(t.points[:, 0])
        ys.append(t.points[:, 1])
    all_x = np.concatenate(xs)
    all_y = np.concatenate(ys)
    pad = 4.0
    x0, x1 = all_x.min() - pad, all_x.max() + pad
    y0, y1 = all_y.min() - pad, all_y.max() + pad
    w, h = (x1 - x0) * scale, (y1 - y0) * scale

    def tx(p):
        return ((p[0] - x0) * scale, (y1 - p[1]) * scale)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">',
        f'<rect width="{_fmt(w)}" height="{_fmt(h)}" fill="#f6f4ef"/>',
        f'<polygon points="{_svg_pts(np.vstack([left, right[::-1]]), tx)}" fill="#d8dee6" stroke="none"/>',
        f'<path d="M {" L ".join(f"{_fmt(tx(p)[0])} {_fmt(tx(p)[1])}" for p in scene.centerline)}" '
        'fill="none" stroke="#aab4c0" stroke-width="1.5" stroke-dasharray="6,6"/>',
    ]
    for obs in scene.obstacles:
        corners = scenesim.rect_corners(obs.center, obs.heading, obs.half_extent)
        out.append(f'<polygon points="{_svg_pts(corners, tx)}" fill="#c0564f" fill-opacity="0.85"/>')
        speed = float(np.hypot(*obs.velocity))
        if speed > 0.1:
            tip = obs.center + obs.velocity * 1.0
            out.append(
                f'<line x1="{_fmt(tx(obs.center)[0])}" y1="{_fmt(tx(obs.center)[1])}" '
                f'x2="{_fmt(tx(tip)[0])}" y2="{_fmt(tx(tip)[1])}" stroke="#7a2d28" stroke-width="1.2"/>'
            )
    if expert is not None:
        pts = expert.with_origin()
        out.append(
            f'<path d="M {" L ".join(f"{_fmt(tx(p)[0])} {_fmt(tx(p)[1])}" for p in pts)}" '
            'fill="none" stroke="#3c8a4e" stroke-width="2" stroke-dasharray="2,3"/>'
        )
    for i, traj in enumerate(candidates):
        pts = traj.with_origin()
        if selected is not None and i == selected:
            style = 'stroke="#e08b18" stroke-width="2.5" stroke-opacity="0.95"'
        else:
            style = 'stroke="#3b6ea5" stroke-width="1.2" stroke-opacity="0.45"'
        out.append(f'<polyline points="{_svg_pts(pts, tx)}" fill="none" {style}/>')
    ego = scenesim.rect_corners((0.0, 0.0), 0.0, scenesim.EGO_HALF)
    out.append(f'<polygon points="{_svg_pts(ego, tx)}" fill="#2c2c2c" fill-opacity="0.9"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_render(cfg: RunConfig, index: int, checkpoint: str | None, out_file: str) -> str:
    """Render one test episode (candidates included when a checkpoint is given)."""
    test = _load_split(cfg, "test")
    if not 0 <= index < len(test):
        raise ConfigError(f"index {index} outside the test split (size {len(test)})")
    rec = test[index]
    cands = []
    selected = None
    if checkpoint is not None:
        store, norm, model_cfg, ckpt_t, _, _ = load_checkpoint(checkpoint)
        sched = diffusion.build_schedule(ckpt_t)
        inputs = stack_inputs([rec], model_cfg)
        with gc.no_grad():
            feat = encode_feature_group(inputs["patches"], inputs["history"], inputs["ego"], store, model_cfg)
        root = int(np.random.SeedSequence([0xE7A1, cfg.seed, index]).generate_state(1)[0])
        _, cands = diffusion.sample_candidates(feat, cfg.n_candidates, store, model_cfg, sched, norm, root)
        res = evalsuite.evaluate_candidates(rec, cands)
        selected = res["selected"]
    svg = render_svg(rec.scene, cands, selected, expert=rec.expert)
    with open(out_file, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_file


# -- argument parsing ----------------------------------------------------------------


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--T", type=int, default=None, dest="T")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--n-candidates", type=int, default=None, dest="n_candidates")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-lr", type=float, default=None, dest="max_lr")
    p.add_argument("--placement", choices=("outer", "inner", "off"), default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--n-episodes", type=int, default=None, dest="n_episodes")


def _config_from(args) -> RunConfig:
    keys = [f.name for f in fields(RunConfig)]
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "post_filter_diversity", False):
        overrides["post_filter_diversity"] = True
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/val/test episode files")
    _add_overrides(p)

    p = sub.add_parser("train", help="train the planner")
    _add_overrides(p)
    p.add_argument("--resume", action="store_true", help="continue from checkpoint_last.bin")

    p = sub.add_parser("eval", help="score the test split")
    _add_overrides(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", action="store_true", help="constant-velocity reference instead of a model")
    p.add_argument("--post-filter-diversity", action="store_true", dest="post_filter_diversity")

    p = sub.add_parser("sweep", help="sensitivity sweep over one axis")
    _add_overrides(p)
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))

    p = sub.add_parser("render", help="render one test episode to SVG")
    _add_overrides(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out-file", default="scene.svg")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from(args)
        if args.command == "gen-data":
            t0 = time.time()
            paths = cmd_gen_data(cfg)
            counts = split_counts(cfg.n_episodes)
            for name in counts:
                print(f"{paths[name]}: {counts[name]} episodes")
            print(f"done in {time.time() - t0:.1f} s")
        elif args.command == "train":
            out = cmd_train(cfg, resume=args.resume)
            print(f"parameters: {out['param_count']}")
            print(f"best validation loss: {out['best_val']:.6f}")
            print(f"log: {out['log']}\ncheckpoint: {out['best']}")
        elif args.command == "eval":
            out = cmd_eval(cfg, args.checkpoint, baseline=args.baseline)
            if out["param_count"]:
                print(f"parameters: {out['param_count']}")
            print(f"metrics: {out['path']}")
            for k, v in out["summary"].items():
                if k != "sample_id":
                    print(f"  {k}: {v}")
        elif args.command == "sweep":
            path = cmd_sweep(cfg, args.axis)
            print(f"sweep table: {path}")
        elif args.command == "render":
            path = cmd_render(cfg, args.index, args.checkpoint, args.out_file)
            print(f"svg: {path}")
        return 0
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except scenesim.InfeasibleScene as e:
        print(f"error: infeasible scene: {e}", file=sys.stderr)
        return 4
    except (ValueError, diffusion.InvalidT) as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
