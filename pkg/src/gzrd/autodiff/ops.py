"""Neural-network ops for the fixed architecture, each with a hand-written backward."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, _lift, make, matmul, reshape, transpose

GELU_C = math.sqrt(2.0 / math.pi)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is ``[in, out]``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    x2 = x.data.reshape(-1, w.shape[0])
    y = x2 @ w.data
    if b is not None:
        y = y + b.data
    out_shape = (*x.shape[:-1], w.shape[1])

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        if x.requires_grad:
            x._accumulate((g2 @ w.data.T).reshape(x.shape))
        if w.requires_grad:
            w._accumulate(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return make(y.reshape(out_shape), parents, backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` ``[B, C_in, L]`` (or ``[C_in, L]``) with ``w`` ``[C_out, C_in, K]``.

    Zero padding is symmetric; the output length is
    ``(L + 2*padding - K) // stride + 1``.
    """
    if x.ndim == 2:
        return _squeeze0(conv1d(_unsqueeze0(x), w, b, stride, padding))
    B, C, L = x.shape
    O, Cw, K = w.shape
    if Cw != C:
        raise DimensionError(f"conv1d: input has {C} channels, kernel expects {Cw}")
    Lp = L + 2 * padding
    if K > Lp:
        raise DimensionError(f"conv1d: kernel {K} larger than padded input {Lp}")
    if stride < 1:
        raise ConfigError("conv1d: stride must be >= 1")
    Lo = (Lp - K) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, K, axis=2)[:, :, : stride * (Lo - 1) + 1 : stride]
    y = np.tensordot(cols, w.data, axes=([1, 3], [1, 2]))  # [B, Lo, O]
    if b is not None:
        y = y + b.data
    y = np.ascontiguousarray(y.transpose(0, 2, 1))

    def backward(g):
        gt = g.transpose(0, 2, 1)  # [B, Lo, O]
        if w.requires_grad:
            w._accumulate(np.tensordot(g, cols, axes=([0, 2], [0, 2])))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.tensordot(gt, w.data, axes=([2], [0]))  # [B, Lo, C, K]
            dxp = np.zeros((B, C, Lp), dtype=x.dtype)
            for k in range(K):
                dxp[:, :, k : k + stride * (Lo - 1) + 1 : stride] += dcols[:, :, :, k].transpose(0, 2, 1)
            x._accumulate(dxp[:, :, padding : padding + L])

    parents = (x, w) if b is None else (x, w, b)
    return make(y, parents, backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D analogue of :func:`conv1d`; ``x`` is ``[B, C_in, H, W]`` or ``[C_in, H, W]``."""
    if x.ndim == 3:
        return _squeeze0(conv2d(_unsqueeze0(x), w, b, stride, padding))
    B, C, H, W = x.shape
    O, Cw, K, K2 = w.shape
    if Cw != C or K != K2:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if K > Hp or K > Wp:
        raise DimensionError(f"conv2d: kernel {K} larger than padded input {Hp}x{Wp}")
    if stride < 1:
        raise ConfigError("conv2d: stride must be >= 1")
    Ho, Wo = (Hp - K) // stride + 1, (Wp - K) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, (K, K), axis=(2, 3))
    cols = cols[:, :, : stride * (Ho - 1) + 1 : stride, : stride * (Wo - 1) + 1 : stride]
    # im2col once: rows are output pixels, columns are (C, K, K) taps
    colmat = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * K * K)
    wmat = w.data.reshape(O, C * K * K)
    y = colmat @ wmat.T
    if b is not None:
        y = y + b.data
    y = np.ascontiguousarray(y.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        if w.requires_grad:
            w._accumulate((g2.T @ colmat).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (wmat.T @ g2.T).reshape(C, K, K, B, Ho, Wo)
            dxp = np.zeros((C, B, Hp, Wp), dtype=x.dtype)
            for i in range(K):
                for j in range(K):
                    dxp[:, :, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride] += dcols[:, i, j]
            x._accumulate(dxp[:, :, padding : padding + H, padding : padding + W].transpose(1, 0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return make(y, parents, backward)


def conv_out_len(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis (biased variance), then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            x._accumulate(dx)

    return make(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    u = x.data
    u2 = u * u
    t = np.tanh(GELU_C * u * (1.0 + 0.044715 * u2))
    y = 0.5 * u * (1.0 + t)

    def backward(g):
        dinner = GELU_C * (1.0 + 3 * 0.044715 * u2)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dinner))

    return make(y, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return make(s, (x,), backward)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """``-log softmax(logits)[label]``; ``logits`` is ``[k]`` or ``[B, k]``.

    ``reduction`` is ``"mean"``, ``"sum"`` or ``"none"`` over the batch.
    """
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (z.shape[0],):
        raise DimensionError(f"cross entropy: {labels.shape[0]} labels for {z.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise DimensionError("cross entropy: label out of range")
    logp = log_softmax_np(z)
    rows = np.arange(z.shape[0])
    losses = -logp[rows, labels]
    if reduction == "mean":
        value, scale = losses.mean(), 1.0 / z.shape[0]
    elif reduction == "sum":
        value, scale = losses.sum(), 1.0
    elif reduction == "none":
        value, scale = losses, None
    else:
        raise ConfigError(f"unknown reduction {reduction!r}")

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        if scale is None:
            d = p * g[:, None]
        else:
            d = p * (g * scale)
        logits._accumulate(d[0] if single else d)

    return make(np.asarray(value, dtype=logits.dtype), (logits,), backward)


def multi_head_attention(x: Tensor, n_heads: int, wq, bq, wk, bk, wv, bv, wo, bo) -> Tensor:
    """Full bidirectional scaled dot-product attention over ``x`` ``[N, D]`` or ``[B, N, D]``."""
    if x.ndim == 2:
        out = multi_head_attention(_unsqueeze0(x), n_heads, wq, bq, wk, bk, wv, bv, wo, bo)
        return _squeeze0(out)
    B, N, D = x.shape
    if D % n_heads:
        raise ConfigError(f"model dim {D} not divisible by {n_heads} heads")
    dh = D // n_heads

    def heads(t):
        return transpose(reshape(t, (B, N, n_heads, dh)), (0, 2, 1, 3))

    q = heads(linear(x, wq, bq))
    k = heads(linear(x, wk, bk))
    v = heads(linear(x, wv, bv))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)  # [B, H, N, dh]
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, N, D))
    return linear(ctx, wo, bo)


def attention_weights(x: np.ndarray, n_heads: int, wq, bq, wk, bk) -> np.ndarray:
    """Attention probabilities ``[B, H, N, N]`` for inspection (no graph)."""
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    B, N, D = x.shape
    dh = D // n_heads
    q = (x @ _data(wq) + _data(bq)).reshape(B, N, n_heads, dh).transpose(0, 2, 1, 3)
    k = (x @ _data(wk) + _data(bk)).reshape(B, N, n_heads, dh).transpose(0, 2, 1, 3)
    s = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh)
    s = np.exp(s - s.max(axis=-1, keepdims=True))
    return s / s.sum(axis=-1, keepdims=True)


def _data(t):
    return t.data if isinstance(t, Tensor) else np.asarray(t)


def _unsqueeze0(x: Tensor) -> Tensor:
    return reshape(_lift(x), (1, *x.shape))


def _squeeze0(x: Tensor) -> Tensor:
    return reshape(x, x.shape[1:])
