"""Batch-level decorrelation of the fused multi-modal representation.

Given the batch representation matrix M (batch x width), the loss
normalizes each column to zero mean and unit population variance, forms
the correlation matrix corr = M^T M, and penalizes the mean of the squared
off-diagonal entries divided by the batch size.  Driving this penalty down
pushes corr toward a diagonal matrix, i.e. toward decorrelated feature
dimensions.

The loss runs as a single fused tape node with a hand-derived backward
pass so that its cost stays a vanishing fraction of a denoiser forward.
The top singular values of corr serve as a training-time diagnostic of how
much of the representation space is actually in use.
"""

from __future__ import annotations

import numpy as np

from .gradcore import Tensor, _node

EPS_DEFAULT = 1e-8


class DegenerateBatch(ValueError):
    """Batch too small for a correlation estimate."""


def _normalize_columns(x: np.ndarray, eps: float):
    mu = x.mean(axis=0, dtype=np.float64).astype(x.dtype)
    xc = x - mu
    var = (xc * xc).mean(axis=0, dtype=np.float64).astype(x.dtype)
    s = np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    return xc / s, s


def correlation_matrix(m: np.ndarray, eps: float = EPS_DEFAULT) -> np.ndarray:
    """Correlation matrix of the column-normalized batch representation.

    Symmetric, with diagonal entries equal to B * var/(var + eps), i.e.
    approximately the batch size.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a (batch, width) matrix, got shape {m.shape}")
    y, _ = _normalize_columns(m, eps)
    # sequential-accumulation product: exactly-cancelling columns yield exact zeros
    return np.einsum("ij,ik->jk", y, y)


def decorr_loss(m, eps: float = EPS_DEFAULT) -> Tensor:
    """Mean squared off-diagonal correlation, divided by the batch size.

    Differentiable w.r.t. ``m``; the mean runs over the d*(d-1)
    off-diagonal slots only.
    """
    t = m if isinstance(m, Tensor) else Tensor(m)
    x = t.data
    if x.ndim != 2:
        raise ValueError(f"expected a (batch, width) matrix, got shape {x.shape}")
    b, d = x.shape
    if b < 2:
        raise DegenerateBatch(f"need at least 2 rows, got {b}")
    if d < 2:
        raise ValueError(f"need at least 2 columns, got {d}")

    y, s = _normalize_columns(x, eps)
    corr = np.einsum("ij,ik->jk", y, y)
    chat = corr.copy()
    np.fill_diagonal(chat, 0.0)
    slots = d * (d - 1)
    val = float((chat.astype(np.float64) ** 2).sum() / slots / b)

    def vjp(g):
        scale = 2.0 * float(g) / (slots * b)
        gcorr = scale * chat
        gy = y @ (gcorr + gcorr.T)
        gx = (gy - gy.mean(axis=0) - y * (gy * y).mean(axis=0)) / s
        return (gx,)

    return _node(np.asarray(val, dtype=x.dtype), (t,), vjp)


def combined_loss(l_diff: Tensor, l_rep, beta: float) -> Tensor:
    """Total training objective: denoising loss plus beta times the penalty."""
    if beta == 0.0:
        return l_diff
    return l_diff + beta * l_rep


def mean_abs_offdiag(corr: np.ndarray) -> float:
    """Mean absolute off-diagonal correlation entry (diagnostic)."""
    d = corr.shape[0]
    chat = corr.copy()
    np.fill_diagonal(chat, 0.0)
    return float(np.abs(chat).sum() / (d * (d - 1)))


def singular_spectrum(corr: np.ndarray, k: int) -> np.ndarray:
    """Top-k singular values of a symmetric correlation matrix, descending.

    For a symmetric matrix the singular values are the absolute
    eigenvalues, so a symmetric eigen-decomposition suffices.
    """
    corr = np.asarray(corr)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {corr.shape}")
    if not 1 <= k <= corr.shape[0]:
        raise ValueError(f"k={k} outside [1, {corr.shape[0]}]")
    vals = np.abs(np.linalg.eigvalsh(corr))
    vals.sort()
    return vals[::-1][:k]
