"""Dense-array primitives with explicit forward/backward pairs.

Everything is float64 and pure numpy. Convolutions go through im2col so
the heavy lifting is one GEMM; the column matrix is returned as the
cache because both the backward pass and finite-difference probing need
exactly those patches.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite values")


# ---------------------------------------------------------------- conv2d

def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """(B,C,H,W) -> (B, C*k*k, OH*OW) patch matrix."""
    b, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, k, k, oh, ow), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, ky, kx] = xp[
                :, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride
            ]
    return cols.reshape(b, c * k * k, oh * ow), oh, ow


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1
) -> tuple[np.ndarray, dict]:
    """y[b,o] = sum_ci,ky,kx w[o,ci,ky,kx] * x_pad[...]; cache carries cols."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d: x {x.shape} vs w {w.shape}")
    co, ci, k, _ = w.shape
    cols, oh, ow = im2col(x, k, stride, pad)
    wf = w.reshape(co, ci * k * k)
    y = np.matmul(wf, cols) + b[None, :, None]
    y = y.reshape(x.shape[0], co, oh, ow)
    cache = {
        "cols": cols,
        "x_shape": x.shape,
        "w": w,
        "stride": stride,
        "pad": pad,
        "oh": oh,
        "ow": ow,
    }
    return y, cache


def conv2d_backward(gy: np.ndarray, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (gx, gw, gb) from the cached im2col patches."""
    cols = cache["cols"]
    w = cache["w"]
    stride, pad = cache["stride"], cache["pad"]
    bsz, c, h, wd = cache["x_shape"]
    co, ci, k, _ = w.shape
    oh, ow = cache["oh"], cache["ow"]

    gyf = gy.reshape(bsz, co, oh * ow)
    gb = gyf.sum(axis=(0, 2))
    gw = np.matmul(gyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)

    wf = w.reshape(co, ci * k * k)
    gcols = np.matmul(wf.T, gyf).reshape(bsz, ci, k, k, oh, ow)
    gxp = np.zeros((bsz, ci, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            gxp[
                :, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride
            ] += gcols[:, :, ky, kx]
    gx = gxp[:, :, pad : pad + h, pad : pad + wd]
    return gx, gw, gb


# ------------------------------------------------------------- upsample

def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(gy: np.ndarray) -> np.ndarray:
    b, c, h, w = gy.shape
    return gy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


# ----------------------------------------------------------- activation

def silu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Split by sign so exp never overflows, whatever the activation scale.
    sig = np.empty_like(x)
    pos = x >= 0.0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    return x * sig, sig


def silu_backward(gy: np.ndarray, x: np.ndarray, sig: np.ndarray) -> np.ndarray:
    return gy * (sig + x * sig * (1.0 - sig))


# --------------------------------------------------------------- linear

def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x (B,I) @ w (O,I).T + b (O,)."""
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"linear: x {x.shape} vs w {w.shape}")
    return x @ w.T + b


def linear_backward(
    gy: np.ndarray, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return gy @ w, gy.T @ x, gy.sum(axis=0)


# ------------------------------------------------------------ embedding

def embedding_sum_forward(
    tokens: tuple[tuple[int, ...], ...], table: np.ndarray
) -> np.ndarray:
    """Sum of table rows per item: (B, D). Empty token lists are illegal."""
    out = np.zeros((len(tokens), table.shape[1]), dtype=np.float64)
    for i, ids in enumerate(tokens):
        if not ids:
            raise ShapeMismatch("empty token sequence")
        out[i] = table[list(ids)].sum(axis=0)
    return out


def embedding_sum_backward(
    gy: np.ndarray, tokens: tuple[tuple[int, ...], ...], vocab: int, dim: int
) -> np.ndarray:
    gt = np.zeros((vocab, dim), dtype=np.float64)
    for i, ids in enumerate(tokens):
        for tok in ids:
            gt[tok] += gy[i]
    return gt


# ------------------------------------------------------------ timestep

def timestep_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


# ----------------------------------------------------------------- loss

def mse_forward(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(d * d))


def mse_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.size


def mse_per_item(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-batch-item MSE, (B,). target may be (1,...) to broadcast."""
    d = pred - np.broadcast_to(target, pred.shape)
    return (d * d).reshape(pred.shape[0], -1).mean(axis=1)
