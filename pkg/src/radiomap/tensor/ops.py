"""Differentiable operations over NCHW tensors.

Every function here is pure: it never writes into its inputs' ``data``.
Convolutions go through an im2col gather followed by one batched GEMM; the
adjoint scatter (col2im) is shared by the conv backward and the transposed
convolution forward.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .core import Tensor, make_result
from .random import RandomStream


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_4d(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what} expects an NCHW tensor, got shape {x.shape}")


# ---------------------------------------------------------------- im2col helpers

def _im2col(xp: np.ndarray, k: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    """Padded (N,C,Hp,Wp) -> contiguous (N, C*k*k, ho*wo)."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    view = as_strided(
        xp,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, dilation * sh, dilation * sw, stride * sh, stride * sw),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, shape_p: tuple, k: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add (N, C*k*k, ho*wo) back into (N,C,Hp,Wp)."""
    n, c = shape_p[:2]
    out = np.zeros(shape_p, dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, ho, wo)
    h_span = stride * (ho - 1) + 1
    w_span = stride * (wo - 1) + 1
    for i in range(k):
        hi = i * dilation
        for j in range(k):
            wj = j * dilation
            out[:, :, hi:hi + h_span:stride, wj:wj + w_span:stride] += cols[:, :, i, j]
    return out


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _unpad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return x[:, :, p:-p, p:-p]


# ---------------------------------------------------------------- convolutions

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    _check_4d(x, "conv2d")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d weight must be [C_out, C_in, K, K], got {weight.shape}")
    n, c, h, w = x.shape
    co, ci, k, _ = weight.shape
    if c != ci:
        raise ValueError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (co,):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match weight {weight.shape}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError(f"invalid conv2d geometry stride={stride} padding={padding} dilation={dilation}")
    ho = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    wo = (w + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape} and weight {weight.shape}")

    w2 = weight.data.reshape(co, ci * k * k)
    if k == 1 and stride == 1 and padding == 0:
        cols = x.data.reshape(n, c, h * w)
    else:
        cols = _im2col(_pad(x.data, padding), k, stride, dilation, ho, wo)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, co, ho, wo)

    parents = (x, weight) if bias is None else (x, weight, bias)
    xshape_p = (n, c, h + 2 * padding, w + 2 * padding)

    def _backward(g):
        g2 = g.reshape(n, co, ho * wo)
        if k == 1 and stride == 1 and padding == 0:
            cols_b = x.data.reshape(n, c, h * w)
        else:
            cols_b = _im2col(_pad(x.data, padding), k, stride, dilation, ho, wo)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.zeros_like(w2)
            for b in range(n):
                gw += g2[b] @ cols_b[b].T
            gw = gw.reshape(weight.shape)
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2)
            if k == 1 and stride == 1 and padding == 0:
                gx = dcols.reshape(x.shape)
            else:
                gx = _unpad(_col2im(dcols, xshape_p, k, stride, dilation, ho, wo), padding)
                gx = np.ascontiguousarray(gx)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, parents, _backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed convolution; weight layout is [C_in, C_out, K, K]."""
    _check_4d(x, "conv_transpose2d")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv_transpose2d weight must be [C_in, C_out, K, K], got {weight.shape}")
    n, c, h, w = x.shape
    ci, co, k, _ = weight.shape
    if c != ci:
        raise ValueError(f"conv_transpose2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (co,):
        raise ValueError(f"conv_transpose2d bias shape {bias.shape} does not match weight {weight.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid conv_transpose2d geometry stride={stride} padding={padding}")
    hout = (h - 1) * stride - 2 * padding + k
    wout = (w - 1) * stride - 2 * padding + k
    if hout < 1 or wout < 1:
        raise ValueError(f"conv_transpose2d output would be empty for input {x.shape}")
    full_shape = (n, co, hout + 2 * padding, wout + 2 * padding)

    w2 = weight.data.reshape(ci, co * k * k)
    xcols = x.data.reshape(n, ci, h * w)
    cols = np.matmul(w2.T, xcols)  # (n, co*k*k, h*w)
    out = _col2im(cols, full_shape, k, stride, 1, h, w)
    out = np.ascontiguousarray(_unpad(out, padding))
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def _backward(g):
        gcols = _im2col(_pad(g, padding), k, stride, 1, h, w)  # (n, co*k*k, h*w)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(w2, gcols).reshape(x.shape)
        if weight.requires_grad:
            gw = np.zeros_like(w2)
            for b in range(n):
                gw += xcols[b] @ gcols[b].T
            gw = gw.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, parents, _backward)


# ---------------------------------------------------------------- pointwise

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.maximum(x.data, 0).astype(x.dtype, copy=False)  # NaN propagates
    return make_result(out, (x,), lambda g: (g * mask,))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add needs identical shapes, got {a.shape} and {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul needs identical shapes, got {a.shape} and {b.shape}")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype).reshape(())
    return make_result(out, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def scale(x: Tensor, factor: float) -> Tensor:
    f = x.dtype.type(factor)
    return make_result(x.data * f, (x,), lambda g: (g * f,))


# ---------------------------------------------------------------- normalization

def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization.

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place (they are module state, not inputs);
    the running variance uses the unbiased estimator.
    """
    _check_4d(x, "batch_norm2d")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batch_norm2d expects {c} channels, got gamma {gamma.shape} / beta {beta.shape}")
    dt = x.dtype.type
    if training:
        m = n * h * w
        mean = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        xc64 = x.data - mean.astype(x.dtype)[None, :, None, None]
        var = (xc64.astype(np.float64) ** 2).mean(axis=(0, 2, 3))
        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        xhat = xc64 * inv_std[None, :, None, None]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        unbiased = var * m / max(m - 1, 1)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

        def _backward(g):
            gg = gb = gx = None
            if gamma.requires_grad:
                gg = (g * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            if beta.requires_grad:
                gb = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            if x.requires_grad:
                gxhat = g * gamma.data[None, :, None, None]
                mean_g = gxhat.mean(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
                mean_gx = (gxhat * xhat).mean(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
                gx = (gxhat - mean_g[None, :, None, None] - xhat * mean_gx[None, :, None, None]) \
                    * inv_std[None, :, None, None]
            return gx, gg, gb
    else:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        rm = running_mean.astype(x.dtype)
        xhat = (x.data - rm[None, :, None, None]) * inv_std[None, :, None, None]
        out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

        def _backward(g):
            gg = (g * xhat).sum(axis=(0, 2, 3)).astype(x.dtype) if gamma.requires_grad else None
            gb = g.sum(axis=(0, 2, 3)).astype(x.dtype) if beta.requires_grad else None
            gx = g * (gamma.data * inv_std)[None, :, None, None] if x.requires_grad else None
            return gx, gg, gb

    return make_result(out.astype(dt, copy=False), (x, gamma, beta), _backward)


# ---------------------------------------------------------------- resampling

def max_pool2d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    _check_4d(x, "max_pool2d")
    if kernel != 2 or stride != 2:
        raise ValueError("only 2x2 pooling with stride 2 is supported")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2d needs even spatial extents, got {x.shape}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first maximum in row-major window order
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def _backward(g):
        gw = np.zeros((n, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return make_result(np.ascontiguousarray(out), (x,), _backward)


def nearest_upsample2x(x: Tensor) -> Tensor:
    _check_4d(x, "nearest_upsample2x")
    n, c, h, w = x.shape
    out = np.broadcast_to(x.data[:, :, :, None, :, None], (n, c, h, 2, w, 2)).reshape(n, c, 2 * h, 2 * w)

    def _backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(np.ascontiguousarray(out), (x,), _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    _check_4d(x, "global_avg_pool")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(x.dtype)
    inv = x.dtype.type(1.0 / (h * w))
    return make_result(out, (x,), lambda g: (np.broadcast_to(g * inv, x.shape).copy(),))


def expand_spatial(x: Tensor, h: int, w: int) -> Tensor:
    """Replicate an (N,C,1,1) map to (N,C,h,w)."""
    _check_4d(x, "expand_spatial")
    if x.shape[2:] != (1, 1):
        raise ValueError(f"expand_spatial needs a 1x1 map, got {x.shape}")
    n, c = x.shape[:2]
    out = np.broadcast_to(x.data, (n, c, h, w)).copy()
    return make_result(out, (x,), lambda g: (g.sum(axis=(2, 3), keepdims=True),))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check_4d(a, "concat_channels")
    _check_4d(b, "concat_channels")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels needs equal N,H,W, got {a.shape} and {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return make_result(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


# ---------------------------------------------------------------- regularization

def dropout(x: Tensor, p: float, training: bool, rng: RandomStream | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return make_result(x.data.copy(), (x,), lambda g: (g,))
    if rng is None:
        raise ValueError("dropout in training mode needs a RandomStream")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- losses

def mse_loss(estimate: Tensor, target, per_element: bool = False) -> Tensor:
    """Batch loss.

    Default: sum of squared differences per sample, averaged over the batch.
    ``per_element=True`` divides further by the per-sample element count.
    """
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=estimate.dtype)
    if estimate.shape != target_data.shape:
        raise ValueError(f"mse_loss shape mismatch: estimate {estimate.shape} vs target {target_data.shape}")
    n = estimate.shape[0]
    per_sample = int(np.prod(estimate.shape[1:])) if estimate.ndim > 1 else 1
    denom = n * per_sample if per_element else n
    diff = estimate.data - target_data
    value = np.asarray((diff.astype(np.float64) ** 2).sum() / denom, dtype=estimate.dtype).reshape(())
    coef = estimate.dtype.type(2.0 / denom)
    return make_result(value, (estimate,), lambda g: (diff * (coef * g),))
