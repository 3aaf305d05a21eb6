"""Stateless forward/backward kernels on NCHW numpy arrays.

Forward functions return ``(output, cache)``; the matching backward takes
the upstream gradient and that cache. Arithmetic runs in the dtype of the
inputs, except reductions that are accumulated in float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch, TargetOutOfRange


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """View of shape (N, C, H_out, W_out, k, k) over an already padded input."""
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x, weight, bias=None, stride=1, pad=0):
    """Direct cross-correlation via im2col."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects NCHW input and OIkk weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeMismatch(f"weight {weight.shape} incompatible with input {x.shape}")
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ShapeMismatch(f"input {x.shape} with pad {pad} is smaller than kernel {k}")
    if bias is not None and bias.shape != (o,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({o},)")
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _windows(xp, k, stride)[:, :, :ho, :wo]
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ weight.reshape(o, -1).T
    if bias is not None:
        out += bias
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, weight, stride, pad, bias is not None)


def conv2d_backward(dout, cache):
    """Returns ``(dx, dweight, dbias)``; ``dbias`` is None for bias-free convs."""
    cols, (n, c, h, w), weight, stride, pad, has_bias = cache
    o, _, k, _ = weight.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dweight = (dmat.T @ cols).reshape(weight.shape)
    dbias = dmat.sum(axis=0, dtype=np.float64).astype(dout.dtype) if has_bias else None
    dcols = (dmat @ weight.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return np.ascontiguousarray(dx), dweight, dbias


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training,
                      eps=1e-5, momentum=0.1):
    """Per-channel normalization over N, H, W.

    In training mode ``running_mean``/``running_var`` are updated in place
    (unbiased variance, like the usual convention).
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"batchnorm parameters {gamma.shape}/{beta.shape} do not match {c} channels")
    shape = (1, c, 1, 1)
    if training:
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = ((x - mean.reshape(shape)) ** 2).mean(axis=(0, 2, 3), dtype=np.float64)
        count = x.size // c
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype).reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return out, (xhat, inv_std, gamma, training)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, training = cache
    shape = (1, -1, 1, 1)
    dgamma = (dout * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(dout.dtype)
    dbeta = dout.sum(axis=(0, 2, 3), dtype=np.float64).astype(dout.dtype)
    dxhat = dout * gamma.reshape(shape)
    if not training:
        return dxhat * inv_std.reshape(shape), dgamma, dbeta
    mean_dxhat = dxhat.mean(axis=(0, 2, 3), dtype=np.float64).astype(dout.dtype)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), dtype=np.float64).astype(dout.dtype)
    dx = inv_std.reshape(shape) * (dxhat - mean_dxhat.reshape(shape)
                                   - xhat * mean_dxhat_xhat.reshape(shape))
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x, k=3, stride=2, pad=1):
    n, c, h, w = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"input {x.shape} too small for {k}x{k} pooling")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) if pad else x
    win = _windows(xp, k, stride)[:, :, :ho, :wo].reshape(n, c, ho, wo, k * k)
    # np.argmax picks the first maximum, which fixes backward tie routing
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape, k, stride, pad)


def maxpool_backward(dout, cache):
    arg, (n, c, h, w), k, stride, pad = cache
    ho, wo = dout.shape[2], dout.shape[3]
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            routed = dout * (arg == i * k + j)
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += routed
    return dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp


def global_avg_pool_forward(x):
    return x.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype), x.shape


def global_avg_pool_backward(dout, shape):
    n, c, h, w = shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], shape).copy()


def linear_forward(x, weight, bias):
    """``x @ weight + bias`` with weight stored as (in_features, out_features)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"linear: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    return x @ weight + bias, x


def linear_backward(dout, x, weight):
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0, dtype=np.float64).astype(dout.dtype)


def softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def _check_targets(logits, targets):
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or targets.shape[0] != logits.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} vs {targets.shape[0]} targets")
    if np.any(targets < 0) or np.any(targets >= logits.shape[1]):
        raise TargetOutOfRange(f"targets must lie in [0, {logits.shape[1]})")
    return targets


def cross_entropy(logits, targets) -> float:
    """Mean negative log-likelihood of ``targets`` under softmax(logits), in float64."""
    logits = np.atleast_2d(np.asarray(logits))
    targets = _check_targets(logits, targets)
    # non-finite logits yield a non-finite loss; callers decide whether to abort
    with np.errstate(invalid="ignore", over="ignore"):
        logp = log_softmax(logits)
    return float(-logp[np.arange(len(targets)), targets].mean())


def cross_entropy_backward(logits, targets):
    """Gradient of :func:`cross_entropy` w.r.t. the logits, in the logits' dtype."""
    logits = np.atleast_2d(np.asarray(logits))
    targets = _check_targets(logits, targets)
    grad = softmax(logits)
    grad[np.arange(len(targets)), targets] -= 1.0
    grad /= len(targets)
    return grad.astype(logits.dtype if np.issubdtype(logits.dtype, np.floating) else np.float64)
