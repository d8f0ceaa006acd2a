"""Minimal convolutional layers with explicit forward/backward passes.

Everything is plain numpy so training stays deterministic and the analytic
gradients can be validated against finite differences. Convolutions use
im2col/col2im; a transposed convolution is implemented as the exact adjoint
of the matching convolution (same kernel/stride/padding geometry).
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Unfold [B, C, H, W] into patch columns [B, C*k*k, Ho*Wo]."""
    batch, channels, height, width = x.shape
    h_out = (height + 2 * pad - kernel) // stride + 1
    w_out = (width + 2 * pad - kernel) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # [B, C, Ho, Wo, k, k]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(batch, channels * kernel * kernel, h_out * w_out)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kernel: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back onto [B, C, H, W]."""
    batch, channels, height, width = shape
    hp, wp = height + 2 * pad, width + 2 * pad
    h_out = (hp - kernel) // stride + 1
    w_out = (wp - kernel) // stride + 1
    cols6 = cols.reshape(batch, channels, kernel, kernel, h_out, w_out)
    out = np.zeros((batch, channels, hp, wp), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += cols6[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


class Conv2d:
    """Strided convolution, weight [c_out, c_in, k, k]."""

    def __init__(self, c_in, c_out, kernel=4, stride=2, pad=1, *, rng: np.random.Generator, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.pad = kernel, stride, pad
        std = np.sqrt(2.0 / (c_in * kernel * kernel))
        self.w = rng.normal(0.0, std, size=(c_out, c_in, kernel, kernel)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._x_shape = None

    def out_size(self, size: int) -> int:
        return (size + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        """Apply the convolution; pass cache=True only when backward() follows.

        Inference calls leave the layer untouched, so a frozen model can be
        shared across threads.
        """
        if x.shape[1] != self.c_in:
            raise ValueError(f"conv expects {self.c_in} input channels, got {x.shape[1]}")
        batch = x.shape[0]
        h_out, w_out = self.out_size(x.shape[2]), self.out_size(x.shape[3])
        cols = im2col(x, self.kernel, self.stride, self.pad)
        w2 = self.w.reshape(self.c_out, -1)
        y = np.matmul(w2, cols) + self.b[:, None]
        if cache:
            self._cols, self._x_shape = cols, x.shape
        return y.reshape(batch, self.c_out, h_out, w_out)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        batch = dy.shape[0]
        dyf = dy.reshape(batch, self.c_out, -1)
        self.db = dyf.sum(axis=(0, 2))
        k_dim = self._cols.shape[1]
        dy_m = dyf.transpose(1, 0, 2).reshape(self.c_out, -1)
        cols_m = self._cols.transpose(0, 2, 1).reshape(-1, k_dim)
        self.dw = (dy_m @ cols_m).reshape(self.w.shape)
        dcols = np.matmul(self.w.reshape(self.c_out, -1).T, dyf)
        return col2im(dcols, self._x_shape, self.kernel, self.stride, self.pad)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]


class ConvTranspose2d:
    """Strided transposed convolution, weight [c_in, c_out, k, k]."""

    def __init__(self, c_in, c_out, kernel=4, stride=2, pad=1, *, rng: np.random.Generator, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.pad = kernel, stride, pad
        std = np.sqrt(2.0 / (c_in * kernel * kernel))
        self.w = rng.normal(0.0, std, size=(c_in, c_out, kernel, kernel)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def out_size(self, size: int) -> int:
        return (size - 1) * self.stride + self.kernel - 2 * self.pad

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        if x.shape[1] != self.c_in:
            raise ValueError(f"transposed conv expects {self.c_in} input channels, got {x.shape[1]}")
        batch, _, h_in, w_in = x.shape
        h_out, w_out = self.out_size(h_in), self.out_size(w_in)
        xf = x.reshape(batch, self.c_in, -1)
        cols = np.matmul(self.w.reshape(self.c_in, -1).T, xf)
        y = col2im(cols, (batch, self.c_out, h_out, w_out), self.kernel, self.stride, self.pad)
        if cache:
            self._x = x
        return y + self.b[None, :, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        batch = dy.shape[0]
        self.db = dy.sum(axis=(0, 2, 3))
        cols_dy = im2col(dy, self.kernel, self.stride, self.pad)  # [B, c_out*k*k, h_in*w_in]
        xf = self._x.reshape(batch, self.c_in, -1)
        x_m = xf.transpose(1, 0, 2).reshape(self.c_in, -1)
        cols_m = cols_dy.transpose(0, 2, 1).reshape(-1, cols_dy.shape[1])
        self.dw = (x_m @ cols_m).reshape(self.w.shape)
        dx = np.matmul(self.w.reshape(self.c_in, -1), cols_dy)
        return dx.reshape(self._x.shape)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]


class ReLU:
    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        mask = x > 0
        if cache:
            self._mask = mask
        return np.where(mask, x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0)

    def params(self):
        return []

    def grads(self):
        return []


class Adam:
    """Adaptive-moment optimizer updating parameter arrays in place."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= (self.lr / b1t) * m / (np.sqrt(v / b2t) + self.eps)
