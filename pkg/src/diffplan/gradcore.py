"""Dense-tensor math with reverse-mode automatic differentiation.

This is the numeric substrate for every trainable part of the package: a
numpy-backed :class:`Tensor` that records primitive operations as they run,
a reverse sweep turning the recording into gradients, an Adam optimizer
with bias correction, a one-cycle learning-rate schedule, and a small
binary container for named parameter tensors.

The compute graph is held implicitly: each tensor keeps references to its
parents together with a vector-Jacobian closure, which by construction is
acyclic and topologically ordered (inputs always precede outputs).

Storage defaults to float32; reductions accumulate in float64 before
casting back.  Graphs built from float64 leaves stay float64 throughout,
which the finite-difference gradient checks rely on.

Checkpoint container layout (all multi-byte fields little-endian):

    magic   4 bytes  b"NTC1"
    version u16      currently 1
    count   u32      number of tensors
    then per tensor:
    name_len u16, name utf-8 bytes,
    dtype   u8       0 = float32, 1 = float64, 2 = int64
    ndim    u8, dims ndim * u32,
    payload raw row-major little-endian values
"""

from __future__ import annotations

import struct
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float32

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class ShapeMismatch(ValueError):
    """Operand shapes cannot be combined."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A numpy array plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def backward(self):
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    rg = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = rg
    out._parents = tuple(parents) if rg else ()
    out._vjp = vjp if rg else None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar node, accumulating into leaf ``.grad``s."""
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss node")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            g = np.asarray(g, dtype=parent.data.dtype)
            parent.grad = g if parent.grad is None else parent.grad + g


# -- primitives --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _wrap(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def pow_scalar(a, p) -> Tensor:
    a = _wrap(a)
    p = float(p)
    out = a.data**p
    return _node(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch("matmul operands must have ndim >= 2")
    try:
        out = a.data @ b.data
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _node(out, (a, b), vjp)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = a.data.reshape(shape)
    return _node(out, (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)
    return _node(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(ts), vjp)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    axes = _norm_axes(axis, a.data.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def vjp(g):
        gg = np.asarray(g)
        if not keepdims:
            for ax in sorted(axes):
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, a.data.shape),)

    return _node(out, (a,), vjp)


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    axes = _norm_axes(axis, a.data.ndim)
    count = int(np.prod([a.data.shape[ax] for ax in axes]))
    out = a.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def vjp(g):
        gg = np.asarray(g) / count
        if not keepdims:
            for ax in sorted(axes):
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, a.data.shape),)

    return _node(out, (a,), vjp)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    out = (x * cdf).astype(x.dtype)

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _node(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = (e / e.sum(axis=axis, keepdims=True, dtype=np.float64)).astype(x.dtype)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _node(y, (a,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift.

    Uses population variance; means/variances accumulate in float64.
    """
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True, dtype=np.float64).astype(xd.dtype)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True, dtype=np.float64).astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    y = xc * inv
    out = y * gain.data + bias.data

    lead = tuple(range(xd.ndim - 1))

    def vjp(g):
        gh = g * gain.data
        dx = inv * (gh - gh.mean(axis=-1, keepdims=True) - y * (gh * y).mean(axis=-1, keepdims=True))
        dgain = (g * y).sum(axis=lead).reshape(gain.data.shape)
        dbias = g.sum(axis=lead).reshape(bias.data.shape)
        return dx, dgain, dbias

    return _node(out, (x, gain, bias), vjp)


def linear(x, w, b=None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def per_token_linear(x, w, b) -> Tensor:
    """Per-position linear map: (B,T,C) x (T,C,D) + (T,D) -> (B,T,D)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.data.shape[1:] != w.data.shape[:2]:
        raise ShapeMismatch(f"per_token_linear {x.data.shape} vs {w.data.shape}")
    out = np.einsum("btc,tcd->btd", x.data, w.data) + b.data

    def vjp(g):
        gx = np.einsum("btd,tcd->btc", g, w.data)
        gw = np.einsum("btc,btd->tcd", x.data, g)
        gb = g.sum(axis=0)
        return gx, gw, gb

    return _node(out, (x, w, b), vjp)


def multi_head_cross_attention(q_tokens, kv_tokens, params: dict, heads: int) -> Tensor:
    """Scaled dot-product cross-attention with per-head splitting.

    ``params`` holds the projections wq/bq, wk/bk, wv/bv, wo/bo.  Queries come
    from ``q_tokens`` (B,Tq,D); keys and values from ``kv_tokens`` (B,Tk,D).
    """
    q_tokens, kv_tokens = _wrap(q_tokens), _wrap(kv_tokens)
    B, Tq, D = q_tokens.data.shape
    Tk = kv_tokens.data.shape[1]
    if D % heads != 0:
        raise ShapeMismatch(f"width {D} not divisible by {heads} heads")
    dh = D // heads

    q = linear(q_tokens, params["wq"], params["bq"])
    k = linear(kv_tokens, params["wk"], params["bk"])
    v = linear(kv_tokens, params["wv"], params["bv"])

    qh = transpose(reshape(q, (B, Tq, heads, dh)), (0, 2, 1, 3))
    kh = transpose(reshape(k, (B, Tk, heads, dh)), (0, 2, 1, 3))
    vh = transpose(reshape(v, (B, Tk, heads, dh)), (0, 2, 1, 3))

    scores = mul(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, vh)
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, Tq, D))
    return linear(ctx, params["wo"], params["bo"])


def mse(pred, target) -> Tensor:
    d = sub(pred, target)
    return mean_(mul(d, d))


# -- parameters and optimizer ------------------------------------------


class ParamStore:
    """Named trainable tensors plus their Adam moment state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def group(self, prefix: str) -> dict:
        """Parameters under ``prefix``, keyed by the remaining suffix."""
        n = len(prefix)
        return {k[n:]: t for k, t in self._params.items() if k.startswith(prefix)}

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def param_count(self) -> int:
        return sum(t.data.size for t in self._params.values())


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam update with bias correction, in place."""
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store._params.items():
        g = p.grad
        if g is None:
            continue
        m = store.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            store.m[name] = m
            store.v[name] = np.zeros_like(p.data)
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)


def onecycle_lr(step: int, total_steps: int, max_lr: float) -> float:
    """One-cycle schedule: 30% linear warmup from max_lr/25, cosine decay to max_lr/1e4."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    start = max_lr / 25.0
    floor = max_lr / 1e4
    warm = 0.3 * total_steps
    if warm <= 0:
        return max_lr
    if step <= warm:
        return start + (max_lr - start) * (step / warm)
    p = (step - warm) / (total_steps - warm)
    return floor + (max_lr - floor) * 0.5 * (1.0 + np.cos(np.pi * p))


# -- named-tensor checkpoint container ----------------------------------

_MAGIC = b"NTC1"
_DTYPE_CODES = {0: "<f4", 1: "<f8", 2: "<i8"}
_CODE_FOR_KIND = {("f", 4): 0, ("f", 8): 1, ("i", 8): 2}


def save_tensors(path, tensors: dict) -> None:
    """Write named arrays in the documented little-endian container format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", 1, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            key = (arr.dtype.kind, arr.dtype.itemsize)
            if key not in _CODE_FOR_KIND:
                raise ValueError(f"unsupported dtype {arr.dtype} for {name!r}")
            code = _CODE_FOR_KIND[key]
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[code]).tobytes())


def load_tensors(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensor container")
        version, count = struct.unpack("<HI", fh.read(6))
        if version != 1:
            raise ValueError(f"{path}: unsupported container version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            dt = np.dtype(_DTYPE_CODES[code])
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(n * dt.itemsize), dtype=dt).reshape(shape)
            out[name] = data.astype(dt.newbyteorder("="))
        return out
