"""Hand-written forward/backward kernels for every layer the models need.

Convolutions run as one channel-GEMM per kernel offset against the padded
volume (contiguous operands, so BLAS does the work), followed by a strided
accumulate. That keeps peak memory at one padded volume regardless of kernel
size and is fast enough for desk-scale 3D training.

All kernels compute in the dtype of their inputs: float32 for training,
float64 when the gradient checker drives them.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeMismatch


def _check5d(x: np.ndarray, name: str = "input"):
    if x.ndim != 5:
        raise ShapeMismatch(f"{name} must be (N, C, D, H, W), got {x.shape}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv3d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: Optional[np.ndarray] = None,
    stride: int = 1,
    pad: int = 0,
):
    """Cross-correlation of (N,Cin,D,H,W) with (Cout,Cin,kd,kh,kw)."""
    _check5d(x)
    if w.ndim != 5 or w.shape[1] != x.shape[1]:
        raise ShapeMismatch(f"weight {w.shape} incompatible with input {x.shape}")
    n, cin, d, h, wd = x.shape
    cout, _, kd, kh, kw = w.shape
    s, p = int(stride), int(pad)
    if d + 2 * p < kd or h + 2 * p < kh or wd + 2 * p < kw:
        raise ShapeMismatch(f"spatial {x.shape[2:]} + 2*{p} smaller than kernel {w.shape[2:]}")
    if b is not None and b.shape != (cout,):
        raise ShapeMismatch(f"bias {b.shape} != ({cout},)")

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p))) if p else x
    dp, hp, wp = xp.shape[2:]
    do = (d + 2 * p - kd) // s + 1
    ho = (h + 2 * p - kh) // s + 1
    wo = (wd + 2 * p - kw) // s + 1

    wc = np.ascontiguousarray(w.transpose(2, 3, 4, 0, 1))  # (kd,kh,kw,Cout,Cin)
    xf = xp.reshape(n, cin, dp * hp * wp)
    out = np.zeros((n, cout, do, ho, wo), dtype=x.dtype)
    zbuf = np.empty((n, cout, dp * hp * wp), dtype=x.dtype)
    for a in range(kd):
        for bb in range(kh):
            for c in range(kw):
                np.matmul(wc[a, bb, c], xf, out=zbuf)
                z = zbuf.reshape(n, cout, dp, hp, wp)
                out += z[:, :, a : a + s * (do - 1) + 1 : s, bb : bb + s * (ho - 1) + 1 : s, c : c + s * (wo - 1) + 1 : s]
    if b is not None:
        out += b.reshape(1, cout, 1, 1, 1)
    cache = (x.shape, xp, w, s, p, b is not None)
    return out, cache


def conv3d_backward(grad_out: np.ndarray, cache):
    """Gradients of a summed scalar loss w.r.t. input, weight, and bias."""
    x_shape, xp, w, s, p, has_bias = cache
    n, cin, d, h, wd = x_shape
    cout, _, kd, kh, kw = w.shape
    do, ho, wo = grad_out.shape[2:]
    if grad_out.shape[:2] != (n, cout):
        raise ShapeMismatch(f"grad_out {grad_out.shape} mismatches conv output")

    gb = grad_out.sum(axis=(0, 2, 3, 4)) if has_bias else None
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    go_flat = np.ascontiguousarray(grad_out.reshape(n, cout, do * ho * wo))
    wct = np.ascontiguousarray(w.transpose(2, 3, 4, 1, 0))  # (kd,kh,kw,Cin,Cout)
    for a in range(kd):
        for bb in range(kh):
            for c in range(kw):
                z = np.matmul(wct[a, bb, c], go_flat).reshape(n, cin, do, ho, wo)
                sl = (
                    slice(None),
                    slice(None),
                    slice(a, a + s * (do - 1) + 1, s),
                    slice(bb, bb + s * (ho - 1) + 1, s),
                    slice(c, c + s * (wo - 1) + 1, s),
                )
                gxp[sl] += z
                gw[:, :, a, bb, c] = np.tensordot(grad_out, xp[sl], axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    gx = gxp[:, :, p : p + d, p : p + h, p : p + wd] if p else gxp
    return np.ascontiguousarray(gx), gw, gb


def conv3d_output_shape(n: int, k: int, s: int, p: int) -> int:
    """Spatial output extent of one axis."""
    return (n + 2 * p - k) // s + 1


# ---------------------------------------------------------------------------
# transposed convolution (kernel == stride, the only variant the models use)
# ---------------------------------------------------------------------------

def transposed_conv3d_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None, stride: int = 2):
    """(N,Cin,D,H,W) -> (N,Cout,D*s,H*s,W*s) with weight (Cin,Cout,s,s,s)."""
    _check5d(x)
    k = int(stride)
    if w.ndim != 5 or w.shape[0] != x.shape[1] or w.shape[2:] != (k, k, k):
        raise ShapeMismatch(f"weight {w.shape} must be (Cin,Cout,{k},{k},{k})")
    n, cin, d, h, wd = x.shape
    cout = w.shape[1]
    if b is not None and b.shape != (cout,):
        raise ShapeMismatch(f"bias {b.shape} != ({cout},)")
    out = np.empty((n, cout, d * k, h * k, wd * k), dtype=x.dtype)
    xf = x.reshape(n, cin, d * h * wd)
    wc = np.ascontiguousarray(w.transpose(2, 3, 4, 1, 0))  # (k,k,k,Cout,Cin)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                z = np.matmul(wc[a, bb, c], xf).reshape(n, cout, d, h, wd)
                out[:, :, a::k, bb::k, c::k] = z
    if b is not None:
        out += b.reshape(1, cout, 1, 1, 1)
    return out, (x, w, b is not None, k)


def transposed_conv3d_backward(grad_out: np.ndarray, cache):
    x, w, has_bias, k = cache
    n, cin, d, h, wd = x.shape
    cout = w.shape[1]
    if grad_out.shape != (n, cout, d * k, h * k, wd * k):
        raise ShapeMismatch(f"grad_out {grad_out.shape} mismatches transposed conv output")
    gb = grad_out.sum(axis=(0, 2, 3, 4)) if has_bias else None
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    wcf = np.ascontiguousarray(w.transpose(2, 3, 4, 0, 1))  # (k,k,k,Cin,Cout)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                gos = np.ascontiguousarray(grad_out[:, :, a::k, bb::k, c::k])
                gof = gos.reshape(n, cout, d * h * wd)
                gx += np.matmul(wcf[a, bb, c], gof).reshape(n, cin, d, h, wd)
                gw[:, :, a, bb, c] = np.tensordot(x, gos, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    return gx, gw, gb


# ---------------------------------------------------------------------------
# pooling / resampling
# ---------------------------------------------------------------------------

def maxpool3d_forward(x: np.ndarray):
    """2x2x2 max pooling, stride 2. Spatial dims must be even."""
    _check5d(x)
    n, c, d, h, w = x.shape
    if d % 2 or h % 2 or w % 2:
        raise ShapeMismatch(f"maxpool3d needs even spatial dims, got {x.shape[2:]}")
    d2, h2, w2 = d // 2, h // 2, w // 2
    xr = x.reshape(n, c, d2, 2, h2, 2, w2, 2)
    xt = np.ascontiguousarray(xr.transpose(0, 1, 2, 4, 6, 3, 5, 7)).reshape(n, c, d2, h2, w2, 8)
    am = np.argmax(xt, axis=-1)  # first maximum wins on ties
    out = np.take_along_axis(xt, am[..., None], axis=-1)[..., 0]
    return out, (x.shape, am)


def maxpool3d_backward(grad_out: np.ndarray, cache):
    x_shape, am = cache
    n, c, d, h, w = x_shape
    d2, h2, w2 = d // 2, h // 2, w // 2
    if grad_out.shape != (n, c, d2, h2, w2):
        raise ShapeMismatch(f"grad_out {grad_out.shape} mismatches pooled shape")
    g = np.zeros((n, c, d2, h2, w2, 8), dtype=grad_out.dtype)
    np.put_along_axis(g, am[..., None], grad_out[..., None], axis=-1)
    g = g.reshape(n, c, d2, h2, w2, 2, 2, 2).transpose(0, 1, 2, 5, 3, 6, 4, 7)
    return np.ascontiguousarray(g).reshape(x_shape)


def nearest_upsample3d_forward(x: np.ndarray):
    """x2 nearest-neighbor upsampling."""
    _check5d(x)
    out = x.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)
    return out, x.shape


def nearest_upsample3d_backward(grad_out: np.ndarray, x_shape):
    n, c, d, h, w = x_shape
    if grad_out.shape != (n, c, 2 * d, 2 * h, 2 * w):
        raise ShapeMismatch(f"grad_out {grad_out.shape} mismatches upsampled shape")
    return grad_out.reshape(n, c, d, 2, h, 2, w, 2).sum(axis=(3, 5, 7))


def global_avg_pool3d_forward(x: np.ndarray):
    _check5d(x)
    return x.mean(axis=(2, 3, 4)), x.shape


def global_avg_pool3d_backward(grad_out: np.ndarray, x_shape):
    n, c, d, h, w = x_shape
    m = d * h * w
    return np.broadcast_to(grad_out[:, :, None, None, None], x_shape).copy() / m


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def instance_norm3d_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    """Per-sample, per-channel normalization over the spatial axes."""
    _check5d(x)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"gamma/beta must be ({c},)")
    mu = x.mean(axis=(2, 3, 4), keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=(2, 3, 4), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    y = gamma.reshape(1, c, 1, 1, 1) * xh + beta.reshape(1, c, 1, 1, 1)
    return y, (xh, inv, gamma)


def instance_norm3d_backward(grad_out: np.ndarray, cache):
    xh, inv, gamma = cache
    c = xh.shape[1]
    if grad_out.shape != xh.shape:
        raise ShapeMismatch("grad_out shape mismatches instance norm input")
    ggamma = (grad_out * xh).sum(axis=(0, 2, 3, 4))
    gbeta = grad_out.sum(axis=(0, 2, 3, 4))
    gxh = grad_out * gamma.reshape(1, c, 1, 1, 1)
    mean_g = gxh.mean(axis=(2, 3, 4), keepdims=True)
    mean_gxh = (gxh * xh).mean(axis=(2, 3, 4), keepdims=True)
    gx = inv * (gxh - mean_g - xh * mean_gxh)
    return gx, ggamma, gbeta


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(grad_out: np.ndarray, mask):
    return grad_out * mask


def leaky_relu_forward(x: np.ndarray, alpha: float = 0.01):
    return np.where(x > 0, x, alpha * x), (x > 0, alpha)


def leaky_relu_backward(grad_out: np.ndarray, cache):
    mask, alpha = cache
    return np.where(mask, grad_out, alpha * grad_out)


def sigmoid_forward(x: np.ndarray):
    z = np.clip(x, -60.0, 60.0)
    y = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
    eps = np.finfo(x.dtype).eps if np.issubdtype(x.dtype, np.floating) else np.finfo(np.float64).eps
    y = np.clip(y, eps, 1.0 - eps).astype(x.dtype)  # keep the open interval (0, 1)
    return y, y


def sigmoid_backward(grad_out: np.ndarray, y):
    return grad_out * y * (1.0 - y)


def softmax_forward(x: np.ndarray, axis: int = 1):
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    return y, (y, axis)


def softmax_backward(grad_out: np.ndarray, cache):
    y, axis = cache
    dot = (grad_out * y).sum(axis=axis, keepdims=True)
    return y * (grad_out - dot)


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def concat_forward(xs: list[np.ndarray], axis: int = 1):
    if not xs:
        raise ShapeMismatch("concat of nothing")
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if ref[:axis] != other[:axis] or ref[axis + 1 :] != other[axis + 1 :]:
            raise ShapeMismatch(f"concat shapes {xs[0].shape} vs {x.shape}")
    sizes = [x.shape[axis] for x in xs]
    return np.concatenate(xs, axis=axis), (sizes, axis)


def concat_backward(grad_out: np.ndarray, cache):
    sizes, axis = cache
    splits = np.cumsum(sizes)[:-1]
    return np.split(grad_out, splits, axis=axis)


def linear_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear {x.shape} @ {w.shape}")
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def linear_backward(grad_out: np.ndarray, cache):
    x, w, has_bias = cache
    gx = grad_out @ w.T
    gw = x.T @ grad_out
    gb = grad_out.sum(axis=0) if has_bias else None
    return gx, gw, gb
