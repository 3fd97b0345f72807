"""Tensor kernels for the autoencoder: forward passes paired with analytic
backward passes.

All image tensors are laid out (batch, time, freq, channels). Convolutions
are 3x3, stride 1, zero-padded to keep the spatial extent; pooling and
upsampling act along the frequency axis only. Every kernel allocates in the
dtype of its input so the whole stack can run in float64 for gradient
checking.
"""

from __future__ import annotations

import numpy as np


def _im2col3(x: np.ndarray) -> np.ndarray:
    """3x3 same-padding patches: (N,H,W,C) -> (N*H*W, 9*C)."""
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:h + 1, 1:w + 1, :] = x
    cols = np.empty((n, h, w, 3, 3, c), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, di, dj, :] = xp[:, di:di + h, dj:dj + w, :]
    return cols.reshape(n * h * w, 9 * c)


def _col2im3(dcols: np.ndarray, shape: tuple) -> np.ndarray:
    """Adjoint of _im2col3: scatter-add patch gradients back to the image."""
    n, h, w, c = shape
    dcols = dcols.reshape(n, h, w, 3, 3, c)
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=dcols.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, di:di + h, dj:dj + w, :] += dcols[:, :, :, di, dj, :]
    return dxp[:, 1:h + 1, 1:w + 1, :]


def conv2d_forward(x, w, b):
    """y[n,i,j,o] = sum_{di,dj,c} x[n,i+di-1,j+dj-1,c] * w[di,dj,c,o] + b[o]"""
    n, h, wd, c = x.shape
    cout = w.shape[3]
    cols = _im2col3(x)
    y = cols @ w.reshape(-1, cout) + b
    return y.reshape(n, h, wd, cout), (cols, w, x.shape)


def conv2d_backward(dy, cache):
    cols, w, xshape = cache
    cout = w.shape[3]
    dy_mat = dy.reshape(-1, cout)
    dw = (cols.T @ dy_mat).reshape(w.shape)
    db = dy_mat.sum(axis=0)
    dx = _col2im3(dy_mat @ w.reshape(-1, cout).T, xshape)
    return dx, dw, db


def upconv2d_forward(x, w, b):
    """Transposed convolution along frequency: interleave zeros to double the
    frequency extent, then 3x3 same convolution."""
    n, h, wd, c = x.shape
    xd = np.zeros((n, h, 2 * wd, c), dtype=x.dtype)
    xd[:, :, 0::2, :] = x
    y, cache = conv2d_forward(xd, w, b)
    return y, cache


def upconv2d_backward(dy, cache):
    dxd, dw, db = conv2d_backward(dy, cache)
    return dxd[:, :, 0::2, :], dw, db


def maxpool_freq_forward(x):
    """(1,2) max pooling along frequency; frequency extent must be even."""
    n, h, w, c = x.shape
    x2 = x.reshape(n, h, w // 2, 2, c)
    arg = x2.argmax(axis=3)
    y = np.take_along_axis(x2, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, (arg, x.shape)


def maxpool_freq_backward(dy, cache):
    arg, xshape = cache
    n, h, w, c = xshape
    dx2 = np.zeros((n, h, w // 2, 2, c), dtype=dy.dtype)
    np.put_along_axis(dx2, arg[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    return dx2.reshape(xshape)


def batchnorm_forward(x, gamma, beta, rmean, rvar, train, momentum=0.9, eps=1e-5):
    """Per-channel normalization over (batch, time, freq).

    Training mode standardizes with batch statistics and returns updated
    running statistics; inference mode uses the running statistics.
    """
    if train:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        std = np.sqrt(var + eps)
        xhat = (x - mu) / std
        new_rmean = momentum * rmean + (1.0 - momentum) * mu
        new_rvar = momentum * rvar + (1.0 - momentum) * var
        cache = (True, xhat, std, gamma, x - mu, var, eps)
        return gamma * xhat + beta, cache, (new_rmean, new_rvar)
    std = np.sqrt(rvar + eps)
    xhat = (x - rmean) / std
    cache = (False, xhat, std, gamma, None, None, eps)
    return gamma * xhat + beta, cache, (rmean, rvar)


def batchnorm_backward(dy, cache):
    train, xhat, std, gamma, xc, var, eps = cache
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    dxhat = dy * gamma
    if not train:
        return dxhat / std, dgamma, dbeta
    m = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
    dvar = (dxhat * xc).sum(axis=(0, 1, 2)) * -0.5 * (var + eps) ** -1.5
    dmu = -(dxhat / std).sum(axis=(0, 1, 2)) + dvar * -2.0 * xc.mean(axis=(0, 1, 2))
    dx = dxhat / std + dvar * 2.0 * xc / m + dmu / m
    return dx, dgamma, dbeta


def dense_forward(x, w, b):
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0.0), (x > 0)


def relu_backward(dy, cache):
    return dy * cache


def sigmoid_forward(x):
    y = 1.0 / (1.0 + np.exp(-x))
    return y, y


def sigmoid_backward(dy, y):
    return dy * y * (1.0 - y)
