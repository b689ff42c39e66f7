"""Network primitives with exact reverse-mode gradients.

All tensors are (batch, height, width, channels) float64.  Forward functions
return a cache consumed by the matching backward function; nothing here
mutates its inputs, so the pairs compose into a pure forward/backward pass.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded 2-D convolution, kernel (kh, kw, c_in, c_out)."""
    kh, kw, cin, cout = w.shape
    B, H, W, c = x.shape
    if c != cin:
        raise ValueError(f"conv input has {c} channels, kernel expects {cin}")
    py, px = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (py, py), (px, px), (0, 0))) if (py or px) else x
    acc = np.zeros((B * H * W, cout))
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, dy : dy + H, dx : dx + W, :].reshape(-1, cin)
            acc += patch @ w[dy, dx]
    out = (acc + b).reshape(B, H, W, cout)
    return out, (xp, x.shape, w.shape)


def conv2d_backward(dout: np.ndarray, w: np.ndarray, cache):
    xp, xshape, wshape = cache
    kh, kw, cin, cout = wshape
    B, H, W, _ = xshape
    py, px = kh // 2, kw // 2
    doutf = dout.reshape(-1, cout)
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, dy : dy + H, dx : dx + W, :].reshape(-1, cin)
            dw[dy, dx] = patch.T @ doutf
            dxp[:, dy : dy + H, dx : dx + W, :] += (doutf @ w[dy, dx].T).reshape(
                B, H, W, cin
            )
    db = doutf.sum(axis=0)
    dx = dxp[:, py : py + H, px : px + W, :] if (py or px) else dxp
    return dx, dw, db


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Per-channel normalization over (batch, height, width).

    Uses biased (population) variance for both the batch statistics and the
    running averages.  Returns (out, cache, new_running_mean, new_running_var);
    the caller decides whether to commit the running statistics.
    """
    if train:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        new_rm = momentum * running_mean + (1.0 - momentum) * mu
        new_rv = momentum * running_var + (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
        new_rm, new_rv = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = gamma * xhat + beta
    return out, (xhat, inv, gamma, train), new_rm, new_rv


def batchnorm_backward(dout: np.ndarray, cache):
    xhat, inv, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 1, 2))
    dbeta = dout.sum(axis=(0, 1, 2))
    dxhat = dout * gamma
    if train:
        n = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
        dx = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=(0, 1, 2))
            - xhat * (dxhat * xhat).sum(axis=(0, 1, 2))
        )
    else:
        dx = dxhat * inv
    return dx, dgamma, dbeta


def leaky_relu_forward(x: np.ndarray, slope: float = 0.2):
    out = np.where(x > 0.0, x, slope * x)
    return out, (x > 0.0, slope)


def leaky_relu_backward(dout: np.ndarray, cache):
    positive, slope = cache
    return np.where(positive, dout, slope * dout)


def tanh_forward(x: np.ndarray):
    out = np.tanh(x)
    return out, out


def tanh_backward(dout: np.ndarray, cache):
    return dout * (1.0 - cache * cache)


@lru_cache(maxsize=256)
def resize_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic (dst, src) matrix for half-pixel-aligned bilinear
    resampling with edge clamping."""
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    i0 = np.floor(pos).astype(int)
    frac = pos - i0
    a = np.zeros((dst, src))
    rows = np.arange(dst)
    np.add.at(a, (rows, np.clip(i0, 0, src - 1)), 1.0 - frac)
    np.add.at(a, (rows, np.clip(i0 + 1, 0, src - 1)), frac)
    a.setflags(write=False)
    return a


def _apply_rows(mat: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(mat, x, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def bilinear_resize(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resize (B, H, W, C) to (B, shape[0], shape[1], C)."""
    ay = resize_matrix(x.shape[1], shape[0])
    ax = resize_matrix(x.shape[2], shape[1])
    return _apply_rows(ax, _apply_rows(ay, x, 1), 2)


def bilinear_resize_backward(
    dout: np.ndarray, src_shape: tuple[int, int]
) -> np.ndarray:
    """Adjoint of bilinear_resize back to spatial size ``src_shape``."""
    ay = resize_matrix(src_shape[0], dout.shape[1])
    ax = resize_matrix(src_shape[1], dout.shape[2])
    return _apply_rows(ax.T, _apply_rows(ay.T, dout, 1), 2)
