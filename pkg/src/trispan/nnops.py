"""Neural-network ops built on the autograd engine.

The recurrent and convolutional ops delegate their inner loops to the
selected kernel backend (numba or numpy); everything else is composed
from the autograd primitives so gradients derive automatically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autograd import (
    Tensor,
    _record,
    _wrap,
    as_tensor,
    concat,
    linear,
    matmul,
    slice_cols,
    softmax,
    transpose,
)
from .errors import ConfigError, ShapeError, ValidationError


def conv1d(x, kernel):
    """Same-padded 1-d convolution over a [L, c_in] sequence.

    `kernel` has shape [k, c_in, c_out] with odd k, so the output keeps
    the sequence length.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d kernel must be [k, c_in, c_out], got {kernel.shape}")
    k, c_in, _ = kernel.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d requires an odd kernel width for same padding, got k={k}")
    if x.ndim != 2 or x.shape[1] != c_in:
        raise ShapeError(f"conv1d input {x.shape} does not match kernel {kernel.shape}")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(kernel.data)
    out = _wrap(kernels.conv1d_fwd(xd, wd))

    def bwd(g):
        dx, dw = kernels.conv1d_bwd(xd, wd, np.ascontiguousarray(g))
        return dx, dw

    return _record(out, (x, kernel), bwd)


@dataclass
class LstmParams:
    """Input/recurrent weights and bias of one unidirectional LSTM.

    wx: [d_in, 4h], wh: [h, 4h], b: [4h]; gate blocks ordered
    (input, forget, cell, output).
    """

    wx: Tensor
    wh: Tensor
    b: Tensor


def lstm_forward(x, params: LstmParams):
    """Hidden-state sequence of a zero-initialized unidirectional LSTM."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"lstm_forward expects [L, d], got {x.shape}")
    h = params.wh.shape[0]
    if params.wx.shape != (x.shape[1], 4 * h) or params.b.shape != (4 * h,):
        raise ShapeError(
            f"lstm params inconsistent: wx {params.wx.shape}, wh {params.wh.shape}, b {params.b.shape}"
        )
    xd = np.ascontiguousarray(x.data)
    wxd = np.ascontiguousarray(params.wx.data)
    whd = np.ascontiguousarray(params.wh.data)
    h_seq, c_seq, gates = kernels.lstm_fwd(xd, wxd, whd, params.b.data)
    out = _wrap(h_seq)

    def bwd(g):
        return kernels.lstm_bwd(
            xd, wxd, whd, gates, c_seq, h_seq, np.ascontiguousarray(g)
        )

    return _record(out, (x, params.wx, params.wh, params.b), bwd)


@dataclass
class MhaParams:
    """Projection weights of one multi-head attention layer."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multi_head_attention(q, k, v, heads, params: MhaParams):
    """Scaled dot-product attention with `heads` parallel heads.

    Each head attends with scale 1/sqrt(d/heads); head outputs are
    concatenated and passed through the output projection.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[1]
    if d % heads != 0:
        raise ConfigError(f"model dim {d} not divisible by head count {heads}")
    if k.shape != v.shape or k.shape[1] != d:
        raise ShapeError(f"attention inputs disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    qp = linear(q, params.wq, params.bq)
    kp = linear(k, params.wk, params.bk)
    vp = linear(v, params.wv, params.bv)
    head_outs = []
    for i in range(heads):
        qs = slice_cols(qp, i * dh, (i + 1) * dh)
        ks = slice_cols(kp, i * dh, (i + 1) * dh)
        vs = slice_cols(vp, i * dh, (i + 1) * dh)
        att = softmax(matmul(qs, transpose(ks)) * scale, axis="row")
        head_outs.append(matmul(att, vs))
    merged = head_outs[0] if heads == 1 else concat(head_outs, axis=1)
    return linear(merged, params.wo, params.bo)


def max_pool_seq(x):
    """Per-feature maximum over the sequence axis of a [L, d] tensor.

    The subgradient routes to the first maximal position of each feature,
    which keeps backward deterministic on ties.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"max_pool_seq expects [L, d], got {x.shape}")
    argmax = x.data.argmax(axis=0)
    out = _wrap(x.data[argmax, np.arange(x.shape[1])].copy())

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[argmax, np.arange(x.shape[1])] = g
        return (dx,)

    return _record(out, (x,), bwd)


def _log_softmax_1d(z):
    m = z.max()
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum())


def cross_entropy_index(logits, target):
    """Negative log softmax probability of one position index."""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy_index expects 1-d logits, got {logits.shape}")
    n = logits.shape[0]
    target = int(target)
    if not 0 <= target < n:
        raise IndexError(f"target {target} outside [0, {n})")
    log_probs = _log_softmax_1d(logits.data)
    out = _wrap(np.asarray(-log_probs[target], dtype=logits.dtype))

    def bwd(g):
        grad = np.exp(log_probs)
        grad[target] -= 1.0
        return (grad * g,)

    return _record(out, (logits,), bwd)


def soft_cross_entropy(logits, target_dist):
    """Cross entropy of 1-d logits against a fixed probability vector.

    The target must already be detached; gradients flow only to the logits.
    """
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError(f"soft_cross_entropy expects 1-d logits, got {logits.shape}")
    if isinstance(target_dist, Tensor):
        if target_dist.requires_grad:
            raise ValidationError("target distribution must not carry gradient")
        target = target_dist.data
    else:
        target = np.asarray(target_dist, dtype=logits.dtype)
    if target.shape != logits.shape:
        raise ShapeError(
            f"target distribution shape {target.shape} != logits shape {logits.shape}"
        )
    total = float(target.sum())
    if not math.isclose(total, 1.0, abs_tol=1e-5) or np.any(target < 0):
        raise ValidationError(f"target distribution must sum to 1 (got {total:.6f})")
    log_probs = _log_softmax_1d(logits.data)
    out = _wrap(np.asarray(-(target * log_probs).sum(), dtype=logits.dtype))

    def bwd(g):
        return ((np.exp(log_probs) - target) * g,)

    return _record(out, (logits,), bwd)


def softmax_1d(values):
    """Plain-array softmax helper for pseudo-label construction (no grad)."""
    z = np.asarray(values, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()
