"""Differentiable primitives: convolutions, pooling, activations, reductions.

Conventions shared by every op here:
  * inputs are ``Tensor``s of matching dtype (float32 or float64);
  * shape violations raise ``ShapeError`` with the offending shapes;
  * spatial ops are stride 1 with zero same-padding, so H x W is preserved;
  * backward rules treat subgradients at kinks as 0 (relu'(0)=0, sign(0)=0).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .core import ShapeError, Tensor, record


def _check_4d(name: str, t: Tensor) -> None:
    if t.ndim != 4:
        raise ShapeError(f"{name} must be 4-d (N,C,H,W), got shape {t.shape}")


def _check_same_dtype(*tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed dtypes not allowed: {sorted(d.name for d in dtypes)}")


def _pad_spatial(a: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return np.ascontiguousarray(a)
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Full 2-d convolution, stride 1, zero same-padding, per-channel bias.

    x: (N,Cin,H,W); w: (Cout,Cin,f,f) with odd f; b: (Cout,). Output is
    (N,Cout,H,W) and is linear in x and w.
    """
    _check_4d("conv2d input", x)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d weight must be (Cout,Cin,f,f), got {w.shape}")
    f = w.shape[2]
    if f % 2 == 0:
        raise ShapeError(f"conv2d filter size must be odd, got {f}")
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has Cin={x.shape[1]}, weight expects Cin={w.shape[1]}")
    cout = w.shape[0]
    if b.shape != (cout,):
        raise ShapeError(f"conv2d bias must be ({cout},), got {b.shape}")
    _check_same_dtype(x, w, b)

    n, cin, h, wd = x.shape
    if f == 1:
        # pointwise: one batched GEMM, no padding
        w2 = w.data.reshape(cout, cin)
        out = np.matmul(w2, x.data.reshape(n, cin, h * wd)).reshape(n, cout, h, wd)
        out += b.data[None, :, None, None]
        xpad = None
    else:
        pad = dilation * (f - 1) // 2
        xpad = _pad_spatial(x.data, pad)
        out = np.empty((n, cout, h, wd), dtype=x.dtype)
        kernels.conv_fwd(xpad, np.ascontiguousarray(w.data), b.data, dilation, out)
    y = Tensor(out)

    def backward_fn(g):
        gx = gw = gb = None
        if b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if f == 1:
            gmat = np.ascontiguousarray(g.reshape(n, cout, h * wd))
            if w.requires_grad:
                xmat = x.data.reshape(n, cin, h * wd)
                # sum over batch of g[n] @ x[n].T, as one batched GEMM
                gw = np.matmul(gmat, xmat.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
            if x.requires_grad:
                gx = np.matmul(w.data.reshape(cout, cin).T, gmat).reshape(x.shape)
        else:
            pad = dilation * (f - 1) // 2
            g = np.ascontiguousarray(g)
            if w.requires_grad:
                gw = np.empty_like(w.data)
                kernels.conv_wgrad(xpad, g, dilation, f, gw)
            if x.requires_grad:
                # correlation of g with the spatially flipped, channel-swapped kernel
                wflip = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
                gx = np.empty_like(x.data)
                kernels.conv_fwd(_pad_spatial(g, pad), wflip,
                                 np.zeros(cin, dtype=g.dtype), dilation, gx)
        return gx, gw, gb

    return record(y, (x, w, b), backward_fn)


def depthwise_conv2d(x: Tensor, w: Tensor, dilation: int = 1) -> Tensor:
    """Per-channel 2-d convolution: channel c of the output sees only channel c.

    x: (N,C,H,W); w: (C,f,f) with odd f. No bias, stride 1, zero same-padding.
    """
    _check_4d("depthwise input", x)
    if w.ndim != 3 or w.shape[1] != w.shape[2]:
        raise ShapeError(f"depthwise weight must be (C,f,f), got {w.shape}")
    f = w.shape[1]
    if f % 2 == 0:
        raise ShapeError(f"depthwise filter size must be odd, got {f}")
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if w.shape[0] != x.shape[1]:
        raise ShapeError(
            f"depthwise channel mismatch: input has C={x.shape[1]}, weight has C={w.shape[0]}")
    _check_same_dtype(x, w)

    pad = dilation * (f - 1) // 2
    xpad = _pad_spatial(x.data, pad)
    out = np.empty_like(x.data)
    kernels.dwconv_fwd(xpad, np.ascontiguousarray(w.data), dilation, out)
    y = Tensor(out)

    def backward_fn(g):
        gx = gw = None
        g = np.ascontiguousarray(g)
        if w.requires_grad:
            gw = np.empty_like(w.data)
            kernels.dwconv_wgrad(xpad, g, dilation, f, gw)
        if x.requires_grad:
            wflip = np.ascontiguousarray(w.data[:, ::-1, ::-1])
            gx = np.empty_like(x.data)
            kernels.dwconv_fwd(_pad_spatial(g, pad), wflip, dilation, gx)
        return gx, gw

    return record(y, (x, w), backward_fn)


_count_cache: dict[tuple, np.ndarray] = {}


def _pool_counts(h: int, w: int, f: int, dtype) -> np.ndarray:
    """Number of in-bounds taps of an f x f window centered at each pixel."""
    key = (h, w, f, np.dtype(dtype).name)
    got = _count_cache.get(key)
    if got is None:
        r = f // 2
        cy = np.minimum(np.arange(h) + r, h - 1) - np.maximum(np.arange(h) - r, 0) + 1
        cx = np.minimum(np.arange(w) + r, w - 1) - np.maximum(np.arange(w) - r, 0) + 1
        got = (cy[:, None] * cx[None, :]).astype(dtype)
        _count_cache[key] = got
    return got


def avg_pool_same(x: Tensor, window: int = 3) -> Tensor:
    """Stride-1 average pooling; the divisor counts only in-bounds taps, so a
    constant map is preserved exactly, borders included."""
    _check_4d("avg_pool input", x)
    if window % 2 == 0 or window < 1:
        raise ShapeError(f"pool window must be odd and positive, got {window}")
    n, c, h, w = x.shape
    pad = (window - 1) // 2
    ones = np.ones((c, window, window), dtype=x.dtype)
    sums = np.empty_like(x.data)
    kernels.dwconv_fwd(_pad_spatial(x.data, pad), ones, 1, sums)
    counts = _pool_counts(h, w, window, x.dtype)
    y = Tensor(sums / counts)

    def backward_fn(g):
        if not x.requires_grad:
            return (None,)
        gx = np.empty_like(x.data)
        kernels.dwconv_fwd(_pad_spatial(np.ascontiguousarray(g / counts), pad), ones, 1, gx)
        return (gx,)

    return record(y, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    y = Tensor(np.maximum(x.data, 0))

    def backward_fn(g):
        return (np.where(x.data > 0, g, x.dtype.type(0)),)

    return record(y, (x,), backward_fn)


def global_channel_mean(x: Tensor) -> Tensor:
    """Spatial mean per (sample, channel): (N,C,H,W) -> (N,C)."""
    _check_4d("global_channel_mean input", x)
    n, c, h, w = x.shape
    y = Tensor(x.data.mean(axis=(2, 3)))

    def backward_fn(g):
        gx = np.broadcast_to(g[:, :, None, None] / (h * w), x.shape)
        return (gx,)

    return record(y, (x,), backward_fn)


def dense_nobias(w: Tensor, v: Tensor) -> Tensor:
    """Matrix product without bias: w (M,C) applied to v (C,) -> (M,), or to a
    batch of rows v (N,C) -> (N,M)."""
    if w.ndim != 2:
        raise ShapeError(f"dense weight must be 2-d, got {w.shape}")
    if v.ndim not in (1, 2) or v.shape[-1] != w.shape[1]:
        raise ShapeError(f"dense shapes incompatible: weight {w.shape}, input {v.shape}")
    _check_same_dtype(w, v)
    if v.ndim == 1:
        y = Tensor(w.data @ v.data)
    else:
        y = Tensor(v.data @ w.data.T)

    def backward_fn(g):
        gw = gv = None
        if v.ndim == 1:
            if w.requires_grad:
                gw = np.outer(g, v.data)
            if v.requires_grad:
                gv = w.data.T @ g
        else:
            if w.requires_grad:
                gw = g.T @ v.data
            if v.requires_grad:
                gv = g @ w.data
        return gw, gv

    return record(y, (w, v), backward_fn)


def softmax(v: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis (1-d vector or 2-d rows).

    Shifted logits are floored just above the exp underflow threshold so the
    outputs stay strictly positive no matter how wide the logit spread is.
    """
    if v.ndim not in (1, 2):
        raise ShapeError(f"softmax expects a vector or rows, got shape {v.shape}")
    shifted = v.data - v.data.max(axis=-1, keepdims=True)
    lo = -80.0 if v.dtype == np.float32 else -700.0
    np.maximum(shifted, lo, out=shifted)
    e = np.exp(shifted)
    y_data = e / e.sum(axis=-1, keepdims=True)
    if v.shape[-1] > 1:
        # keep saturated entries strictly below 1 (rounding can hit 1.0 exactly)
        np.minimum(y_data, 1.0 - np.finfo(v.dtype).epsneg, out=y_data)
    y = Tensor(y_data)

    def backward_fn(g):
        dot = (g * y_data).sum(axis=-1, keepdims=True)
        return (y_data * (g - dot),)

    return record(y, (v,), backward_fn)


def scale_channels(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a feature map by a scalar, or by one scalar per sample.

    s has shape () for a global scale or (N,) for per-sample scales; gradient
    flows to both the map and the scale.
    """
    _check_4d("scale_channels input", x)
    if s.ndim not in (0, 1):
        raise ShapeError(f"scale must be scalar or per-sample (N,), got shape {s.shape}")
    if s.ndim == 1 and s.shape[0] != x.shape[0]:
        raise ShapeError(f"per-sample scale length {s.shape[0]} != batch {x.shape[0]}")
    _check_same_dtype(x, s)
    sb = s.data if s.ndim == 0 else s.data[:, None, None, None]
    y = Tensor(x.data * sb)

    def backward_fn(g):
        gx = gs = None
        if x.requires_grad:
            gx = g * sb
        if s.requires_grad:
            n = x.shape[0]
            if s.ndim == 0:
                gs = np.asarray(np.dot(g.reshape(-1), x.data.reshape(-1)), dtype=s.dtype)
            else:
                # per-sample dot product without a full-size temporary
                gs = np.einsum("ni,ni->n", g.reshape(n, -1), x.data.reshape(n, -1))
                gs = np.asarray(gs, dtype=s.dtype)
        return gx, gs

    return record(y, (x, s), backward_fn)


def concat_channels(maps: list[Tensor]) -> Tensor:
    """Concatenate feature maps along the channel axis, in argument order."""
    if not maps:
        raise ShapeError("concat_channels needs at least one map")
    for m in maps:
        _check_4d("concat_channels input", m)
    ref = maps[0].shape
    for m in maps[1:]:
        if (m.shape[0], m.shape[2], m.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels N/H/W mismatch: {ref} vs {m.shape}")
    _check_same_dtype(*maps)
    y = Tensor(np.concatenate([m.data for m in maps], axis=1))
    widths = [m.shape[1] for m in maps]

    def backward_fn(g):
        grads = []
        start = 0
        for m, c in zip(maps, widths):
            grads.append(g[:, start:start + c] if m.requires_grad else None)
            start += c
        return grads

    return record(y, maps, backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two identically shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    _check_same_dtype(a, b)
    y = Tensor(a.data + b.data)

    def backward_fn(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)

    return record(y, (a, b), backward_fn)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean-per-sample L1: sum of |pred - target| over everything, divided by
    the leading (batch) dimension."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    _check_same_dtype(pred, target)
    n = pred.shape[0] if pred.ndim > 0 else 1
    diff = pred.data - target.data
    y = Tensor(np.abs(diff).sum() / n)

    def backward_fn(g):
        s = np.sign(diff) * (g / n)
        gp = s if pred.requires_grad else None
        gt = -s if target.requires_grad else None
        return gp, gt

    return record(y, (pred, target), backward_fn)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements -> scalar."""
    y = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))

    def backward_fn(g):
        return (np.full(x.shape, g, dtype=x.dtype),)

    return record(y, (x,), backward_fn)


def take_row(x: Tensor, i: int) -> Tensor:
    """Select row i of a >=1-d tensor; shape drops the leading axis."""
    if not 0 <= i < x.shape[0]:
        raise ShapeError(f"row {i} out of range for shape {x.shape}")
    y = Tensor(x.data[i].copy())

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        return (gx,)

    return record(y, (x,), backward_fn)


def take_column(x: Tensor, j: int) -> Tensor:
    """Select column j of a 2-d tensor -> (N,)."""
    if x.ndim != 2:
        raise ShapeError(f"take_column expects 2-d, got shape {x.shape}")
    if not 0 <= j < x.shape[1]:
        raise ShapeError(f"column {j} out of range for shape {x.shape}")
    y = Tensor(x.data[:, j].copy())

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, j] = g
        return (gx,)

    return record(y, (x,), backward_fn)
