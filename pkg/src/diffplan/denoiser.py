"""Conditional noise-prediction network.

Noisy action sequences become 8 tokens through a per-position input
projection, receive a sinusoidal timestep embedding, and pass through three
pre-norm fusion blocks.  Each block cross-attends to one conditioning
source, in fixed order: scene tokens, then the action-history embedding,
then the ego-status embedding.  A linear head decodes per-token noise
estimates.

The fused representation M is the mean over the 8 action tokens right
after the last fusion block and before the head; a configuration flag can
move the tap to the output of the second block instead ("inner"
placement).  The tap is read-only: it never changes the predicted noise.
"""

from __future__ import annotations

import numpy as np

from . import gradcore as gc
from .featenc import FeatureGroup, ModelConfig, init_encoder_params

M_TAPS = ("outer", "inner")


def time_features(t, dim: int) -> np.ndarray:
    """Sinusoidal features of the timestep indices: (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    k = np.arange(half)
    freqs = np.exp(-np.log(10000.0) * k / max(1, half - 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def init_denoiser_params(store: gc.ParamStore, cfg: ModelConfig, rng: np.random.Generator, dtype=gc.DEFAULT_DTYPE):
    d = cfg.dim

    def w(shape, fan_in, scale=1.0):
        return (scale * rng.normal(0.0, fan_in**-0.5, shape)).astype(dtype)

    def zeros(shape):
        return np.zeros(shape, dtype=dtype)

    def ones(shape):
        return np.ones(shape, dtype=dtype)

    store.add("den.in.w", w((cfg.horizon, 2, d), 2))
    store.add("den.in.b", zeros((cfg.horizon, d)))
    store.add("den.time.w1", w((d, d), d))
    store.add("den.time.b1", zeros(d))
    store.add("den.time.w2", w((d, d), d))
    store.add("den.time.b2", zeros(d))
    for i in range(cfg.blocks):
        p = f"den.b{i}."
        store.add(p + "ln1.g", ones(d))
        store.add(p + "ln1.b", zeros(d))
        for name in ("wq", "wk", "wv", "wo"):
            store.add(p + "att." + name, w((d, d), d))
        for name in ("bq", "bk", "bv", "bo"):
            store.add(p + "att." + name, zeros(d))
        store.add(p + "ln2.g", ones(d))
        store.add(p + "ln2.b", zeros(d))
        store.add(p + "ff.w1", w((d, cfg.ff_dim), d))
        store.add(p + "ff.b1", zeros(cfg.ff_dim))
        store.add(p + "ff.w2", w((cfg.ff_dim, d), cfg.ff_dim))
        store.add(p + "ff.b2", zeros(d))
    store.add("den.head.w", w((d, 2), d, scale=0.1))
    store.add("den.head.b", zeros(2))


def init_params(cfg: ModelConfig, seed: int, dtype=gc.DEFAULT_DTYPE) -> gc.ParamStore:
    """Fresh parameter store holding both the encoders and the denoiser."""
    store = gc.ParamStore()
    rng = np.random.default_rng(np.random.SeedSequence([0x9A2A, seed]))
    init_encoder_params(store, cfg, rng, dtype)
    init_denoiser_params(store, cfg, rng, dtype)
    return store


def _fusion_block(tokens, kv, store: gc.ParamStore, prefix: str, cfg: ModelConfig):
    normed = gc.layer_norm(tokens, store[prefix + "ln1.g"], store[prefix + "ln1.b"])
    att = gc.multi_head_cross_attention(normed, kv, store.group(prefix + "att."), cfg.heads)
    h = gc.add(tokens, att)
    normed2 = gc.layer_norm(h, store[prefix + "ln2.g"], store[prefix + "ln2.b"])
    ff = gc.linear(gc.gelu(gc.linear(normed2, store[prefix + "ff.w1"], store[prefix + "ff.b1"])),
                   store[prefix + "ff.w2"], store[prefix + "ff.b2"])
    return gc.add(h, ff)


def forward(x_t, t, feat: FeatureGroup, store: gc.ParamStore, cfg: ModelConfig, m_tap: str = "outer"):
    """Predict the injected noise.

    x_t: (B, horizon, 2) noisy actions; t: (B,) timestep indices in [1, T];
    returns (eps_hat (B, horizon, 2), M (B, dim)).  ``m_tap`` selects where
    the fused representation is read: after the last block ("outer",
    default) or after the second block ("inner").
    """
    if m_tap not in M_TAPS:
        raise ValueError(f"unknown m_tap {m_tap!r}")
    x_t = x_t if isinstance(x_t, gc.Tensor) else gc.Tensor(x_t)
    if x_t.ndim != 3 or x_t.shape[1] != cfg.horizon or x_t.shape[2] != 2:
        raise gc.ShapeMismatch(f"x_t must be (B, {cfg.horizon}, 2), got {x_t.shape}")
    b = x_t.shape[0]

    tokens = gc.per_token_linear(x_t, store["den.in.w"], store["den.in.b"])
    tfeat = gc.Tensor(time_features(t, cfg.dim).astype(x_t.dtype))
    temb = gc.linear(gc.gelu(gc.linear(tfeat, store["den.time.w1"], store["den.time.b1"])),
                     store["den.time.w2"], store["den.time.b2"])
    tokens = gc.add(tokens, gc.reshape(temb, (b, 1, cfg.dim)))

    sources = (
        feat.scene_tokens,
        gc.reshape(feat.emb_action, (b, 1, cfg.dim)),
        gc.reshape(feat.emb_ego, (b, 1, cfg.dim)),
    )
    m = None
    for i, kv in enumerate(sources):
        tokens = _fusion_block(tokens, kv, store, f"den.b{i}.", cfg)
        if m_tap == "inner" and i == 1:
            m = tokens.mean(axis=1)
    if m is None:
        m = tokens.mean(axis=1)

    eps_hat = gc.linear(tokens, store["den.head.w"], store["den.head.b"])
    return eps_hat, m


def forward_with_inner_decorr(x_t, t, feat: FeatureGroup, store: gc.ParamStore, cfg: ModelConfig):
    """Same computation as forward, with M read after fusion block 2."""
    return forward(x_t, t, feat, store, cfg, m_tap="inner")
