"""Conditioning features for the denoiser.

The scene is rasterized into a fixed ego-centered bird's-eye-view grid
(drivable mask, obstacle occupancy, obstacle speed), split into patches and
linearly embedded into scene tokens.  The driving history and the current
ego status each pass through a small MLP.  Together the three make up the
feature group that conditions every denoising step.

The rasterizer is parameter-free by design; only the embeddings train.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .scenesim import EgoStatus, SceneSpec, points_in_drivable, points_in_rect

OBSTACLE_SPEED_SCALE = 20.0  # m/s mapped to flow channel value 1.0


@dataclass(frozen=True)
class ModelConfig:
    """Widths shared by the encoders and the denoiser."""

    dim: int = 128
    heads: int = 4
    ff_dim: int = 256
    raster_size: int = 32
    patch_size: int = 8
    window: float = 64.0
    horizon: int = 8
    history_len: int = 4
    ego_dim: int = 5
    blocks: int = 3

    @property
    def patches_per_side(self) -> int:
        return self.raster_size // self.patch_size

    @property
    def n_tokens(self) -> int:
        return self.patches_per_side**2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * 3

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.dim, self.heads, self.ff_dim, self.raster_size, self.patch_size,
             int(self.window), self.horizon, self.history_len, self.ego_dim, self.blocks],
            dtype=np.int64,
        )

    @classmethod
    def from_array(cls, a) -> "ModelConfig":
        a = [int(v) for v in a]
        return cls(a[0], a[1], a[2], a[3], a[4], float(a[5]), a[6], a[7], a[8], a[9])


@dataclass(frozen=True)
class FeatureGroup:
    """The conditional input of the denoiser, batched."""

    scene_tokens: gc.Tensor  # (B, K, dim)
    emb_action: gc.Tensor  # (B, dim)
    emb_ego: gc.Tensor  # (B, dim)


def rasterize(scene: SceneSpec, cfg: ModelConfig = ModelConfig()) -> np.ndarray:
    """(raster_size, raster_size, 3) grid over an ego-centered window.

    Cell [i, j] covers x in [x0 + i*res, x0 + (i+1)*res) and likewise for y;
    channels are drivable mask, obstacle occupancy at t=0, and obstacle
    speed scaled to [0, 1].  All values are evaluated at cell centers.
    """
    n = cfg.raster_size
    res = cfg.window / n
    lo = -cfg.window / 2.0
    centers_1d = lo + (np.arange(n) + 0.5) * res
    gx, gy = np.meshgrid(centers_1d, centers_1d, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)

    raster = np.zeros((n, n, 3), dtype=np.float32)
    raster[:, :, 0] = points_in_drivable(scene, centers).reshape(n, n)
    for obs in scene.obstacles:
        inside = points_in_rect(centers, obs.center, obs.heading, obs.half_extent).reshape(n, n)
        raster[:, :, 1] = np.maximum(raster[:, :, 1], inside)
        speed = min(1.0, float(np.hypot(*obs.velocity)) / OBSTACLE_SPEED_SCALE)
        raster[:, :, 2] = np.maximum(raster[:, :, 2], inside * speed)
    return raster


def patchify(raster: np.ndarray, cfg: ModelConfig = ModelConfig()) -> np.ndarray:
    """Split a raster into row-major patches, each flattened: (n_tokens, patch_dim)."""
    p, side = cfg.patch_size, cfg.patches_per_side
    r = raster.reshape(side, p, side, p, 3)
    return r.transpose(0, 2, 1, 3, 4).reshape(cfg.n_tokens, cfg.patch_dim)


def ego_vector(ego: EgoStatus) -> np.ndarray:
    one_hot = np.zeros(3, dtype=np.float32)
    one_hot[("follow", "left", "right").index(ego.command)] = 1.0
    return np.concatenate([[ego.velocity, ego.acceleration], one_hot]).astype(np.float32)


def init_encoder_params(store: gc.ParamStore, cfg: ModelConfig, rng: np.random.Generator, dtype=gc.DEFAULT_DTYPE):
    def w(shape, fan_in):
        return rng.normal(0.0, fan_in**-0.5, shape).astype(dtype)

    d = cfg.dim
    store.add("enc.scene.w", w((cfg.patch_dim, d), cfg.patch_dim))
    store.add("enc.scene.b", np.zeros(d, dtype=dtype))
    store.add("enc.scene.pos", (0.02 * rng.normal(size=(cfg.n_tokens, d))).astype(dtype))
    hist_in = 2 * cfg.history_len
    store.add("enc.act.w1", w((hist_in, d), hist_in))
    store.add("enc.act.b1", np.zeros(d, dtype=dtype))
    store.add("enc.act.w2", w((d, d), d))
    store.add("enc.act.b2", np.zeros(d, dtype=dtype))
    store.add("enc.ego.w1", w((cfg.ego_dim, d), cfg.ego_dim))
    store.add("enc.ego.b1", np.zeros(d, dtype=dtype))
    store.add("enc.ego.w2", w((d, d), d))
    store.add("enc.ego.b2", np.zeros(d, dtype=dtype))


def encode_scene(patches, store: gc.ParamStore, cfg: ModelConfig) -> gc.Tensor:
    """Shared linear patch embedding plus learned positional embedding: (B,K,dim)."""
    tokens = gc.linear(patches, store["enc.scene.w"], store["enc.scene.b"])
    return gc.add(tokens, store["enc.scene.pos"])


def _mlp2(x, store, prefix: str) -> gc.Tensor:
    h = gc.gelu(gc.linear(x, store[prefix + "w1"], store[prefix + "b1"]))
    return gc.linear(h, store[prefix + "w2"], store[prefix + "b2"])


def encode_action_history(history, store: gc.ParamStore) -> gc.Tensor:
    """Flattened past waypoints -> two-layer MLP -> (B, dim)."""
    return _mlp2(history, store, "enc.act.")


def encode_ego(ego_vec, store: gc.ParamStore) -> gc.Tensor:
    """(velocity, acceleration, one-hot command) -> two-layer MLP -> (B, dim)."""
    return _mlp2(ego_vec, store, "enc.ego.")


def encode_feature_group(patches, history, ego_vecs, store: gc.ParamStore, cfg: ModelConfig) -> FeatureGroup:
    return FeatureGroup(
        scene_tokens=encode_scene(gc.Tensor(patches), store, cfg),
        emb_action=encode_action_history(gc.Tensor(history), store),
        emb_ego=encode_ego(gc.Tensor(ego_vecs), store),
    )


def episode_inputs(rec, cfg: ModelConfig = ModelConfig()) -> dict:
    """Raw per-episode encoder inputs (numpy, model dtype)."""
    return {
        "patches": patchify(rasterize(rec.scene, cfg), cfg).astype(np.float32),
        "history": rec.history.reshape(-1).astype(np.float32),
        "ego": ego_vector(rec.ego),
    }


def stack_inputs(records, cfg: ModelConfig = ModelConfig()) -> dict:
    per = [episode_inputs(r, cfg) for r in records]
    return {
        "patches": np.stack([p["patches"] for p in per]),
        "history": np.stack([p["history"] for p in per]),
        "ego": np.stack([p["ego"] for p in per]),
    }
