"""Differentiable layers.

Each layer records on ``forward`` exactly what its ``backward`` needs;
``backward`` returns the gradient w.r.t. the layer input, assigns
parameter gradients on the layer's :class:`Param` objects, and consumes
the recorded context.  Calling ``backward`` without a preceding
``forward`` is an error.

Convolutions are 3x3, stride 1, zero-padding 1 (shape preserving) and
run as unfold + BLAS matmul; the unfold itself is one of the compiled
hot kernels.  Layers are dtype-polymorphic: float32 for training,
float64 for gradient checks.
"""

from __future__ import annotations

import math

import numpy as np

from tomoforge import backend

__all__ = ["Param", "Conv2d", "BatchNorm2d", "LeakyReLU", "Add"]


class Param:
    """A trainable array and its most recent gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = None


def _unfold(x):
    return backend.kernels.unfold3x3(np.ascontiguousarray(x))


def _weight_mat(weight):
    """(O, C, 3, 3) -> (O, 9*C) matching the unfold row order (offset-major)."""
    out_ch, c = weight.shape[:2]
    return np.ascontiguousarray(weight.transpose(0, 2, 3, 1)).reshape(out_ch, 9 * c)


def _conv3(x, weight, bias=None):
    """Shape-preserving 3x3 correlation via unfold + matmul."""
    b, c, h, w = x.shape
    out_ch = weight.shape[0]
    col = _unfold(x)
    y = _weight_mat(weight) @ col
    if bias is not None:
        y += bias[:, None]
    return y.reshape(out_ch, b, h, w).transpose(1, 0, 2, 3), col


def _unfold_width(x3, w):
    """Column-shift unfold of a single image stack: (C, H, W) -> (3*C, H*W).

    Row q*C + c holds channel c shifted by column offset q-1 (zero padded).
    Row offsets are not unfolded; they reduce to whole-row shifts of the
    flattened output, so a 3x3 convolution needs only this 1x3 unfold.
    """
    c, h, _ = x3.shape
    xpw = np.zeros((c, h, w + 2), dtype=x3.dtype)
    xpw[:, :, 1:-1] = x3
    u = np.empty((3 * c, h * w), dtype=x3.dtype)
    for q in range(3):
        np.copyto(u[q * c:(q + 1) * c].reshape(c, h, w), xpw[:, :, q:q + w])
    return u


def _stacked_weight(weight):
    """(O, C, 3, 3) -> (3*O, 3*C): rows (p, o), columns (q, c)."""
    o, c = weight.shape[:2]
    return np.ascontiguousarray(weight.transpose(2, 0, 3, 1)).reshape(3 * o, 3 * c)


def _conv3_single(x, weight, bias=None):
    """B=1 fast path: 1x3 unfold + one stacked matmul + row-shift folds.

    Moves a third of the memory of the full 3x3 unfold, which dominates
    on bandwidth-limited hosts.  Returns (y, u) with u the (3*C, H*W)
    unfold kept for the weight-gradient matmuls.
    """
    _, c, h, w = x.shape
    o = weight.shape[0]
    u = _unfold_width(x[0], w)
    g = (_stacked_weight(weight) @ u).reshape(3, o, h * w)
    # g[p] holds the column-mixed response for kernel row p; shifting the
    # flattened output by a whole row of w pixels realizes the row offset.
    y = g[1].copy()
    y[:, w:] += g[0][:, :-w]
    y[:, :-w] += g[2][:, w:]
    if bias is not None:
        y += bias[:, None]
    return y.reshape(o, 1, h, w).transpose(1, 0, 2, 3), u


def _conv3_single_gw(gy, u, out_ch, in_ch, h, w):
    """Weight gradient on the B=1 fast path: three row-sliced matmuls."""
    gy_flat = gy.reshape(out_ch, h * w)
    gw = np.empty((3, out_ch, 3 * in_ch), dtype=gy_flat.dtype)
    gw[0] = gy_flat[:, w:] @ u[:, :-w].T
    gw[1] = gy_flat @ u.T
    gw[2] = gy_flat[:, :-w] @ u[:, w:].T
    # (p, o, (q, c)) -> (o, c, p, q)
    return np.ascontiguousarray(
        gw.reshape(3, out_ch, 3, in_ch).transpose(1, 3, 0, 2))


class Conv2d:
    """3x3 convolution layer with bias.

    Weights use Kaiming fan-in initialization with the LeakyReLU gain
    sqrt(2 / (1 + slope^2)).
    """

    def __init__(self, in_ch, out_ch, *, rng=None, dtype=np.float32, init_slope=0.01):
        self.in_ch = in_ch
        self.out_ch = out_ch
        if rng is None:
            rng = np.random.default_rng()
        std = math.sqrt(2.0 / (1.0 + init_slope ** 2)) / math.sqrt(in_ch * 9)
        w = rng.standard_normal((out_ch, in_ch, 3, 3)) * std
        self.weight = Param(w.astype(dtype))
        self.bias = Param(np.zeros(out_ch, dtype=dtype))
        self._col = None
        self._shape = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ValueError(
                f"conv expects (B, {self.in_ch}, H, W) input, got {x.shape}")
        self._shape = x.shape
        if x.shape[0] == 1:
            y, self._col = _conv3_single(x, self.weight.value, self.bias.value)
        else:
            y, self._col = _conv3(x, self.weight.value, self.bias.value)
        return y

    def backward(self, gy):
        if self._col is None:
            raise RuntimeError("conv backward called before forward")
        b, _, h, w = self._shape
        if b == 1:
            self.weight.grad = _conv3_single_gw(
                gy[:, :, :, :].reshape(self.out_ch, h * w), self._col,
                self.out_ch, self.in_ch, h, w)
        else:
            gy_mat = np.ascontiguousarray(
                gy.transpose(1, 0, 2, 3)).reshape(self.out_ch, b * h * w)
            gw = (gy_mat @ self._col.T).reshape(self.out_ch, 3, 3, self.in_ch)
            self.weight.grad = np.ascontiguousarray(gw.transpose(0, 3, 1, 2))
        self.bias.grad = gy.sum(axis=(0, 2, 3))
        self._col = None
        # Gradient w.r.t. input: correlation with the spatially flipped,
        # channel-transposed kernel (exact transpose, boundaries included).
        w_t = np.ascontiguousarray(
            self.weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        if b == 1:
            gx, _ = _conv3_single(gy, w_t)
        else:
            gx, _ = _conv3(gy, w_t)
        return gx


class BatchNorm2d:
    """Per-channel batch normalization over (batch, H, W), batch statistics.

    Always uses the current batch's statistics: the network is trained
    and evaluated on the identical single image, so there is no separate
    inference mode.
    """

    def __init__(self, channels, eps=1e-5, dtype=np.float32):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.channels = channels
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))
        self._ctx = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"batchnorm expects (B, {self.channels}, H, W) input, got {x.shape}")
        b, c, h, w = x.shape
        m = b * h * w
        if m < 2:
            raise ValueError("batchnorm needs at least 2 elements per channel")
        mu = x.mean(axis=(0, 2, 3))
        xc = x - mu[None, :, None, None]
        var = np.mean(xc * xc, axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = xc
        xhat *= inv[None, :, None, None]
        self._ctx = (xhat, inv, m)
        return self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]

    def backward(self, gy):
        if self._ctx is None:
            raise RuntimeError("batchnorm backward called before forward")
        xhat, inv, m = self._ctx
        self._ctx = None
        self.gamma.grad = (gy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad = gy.sum(axis=(0, 2, 3))
        scale = (self.gamma.value * inv / m)[None, :, None, None]
        return scale * (m * gy
                        - self.beta.grad[None, :, None, None]
                        - xhat * self.gamma.grad[None, :, None, None])


class LeakyReLU:
    """max(0, x) + slope * min(0, x); derivative at exactly 0 is slope."""

    def __init__(self, slope=0.01):
        self.slope = slope
        self._mask = None

    def params(self):
        return []

    def forward(self, x):
        # Multiplicative mask realizes both the value and the derivative,
        # including the slope subgradient at exactly 0.
        mask = (x > 0).astype(x.dtype)
        mask *= x.dtype.type(1.0 - self.slope)
        mask += x.dtype.type(self.slope)
        self._mask = mask
        return x * mask

    def backward(self, gy):
        if self._mask is None:
            raise RuntimeError("leaky_relu backward called before forward")
        gx = gy * self._mask
        self._mask = None
        return gx


class Add:
    """Elementwise sum of two activations."""

    def __init__(self):
        self._ran = False

    def params(self):
        return []

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
        self._ran = True
        return a + b

    def backward(self, gy):
        if not self._ran:
            raise RuntimeError("add backward called before forward")
        self._ran = False
        return gy, gy
