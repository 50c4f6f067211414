"""Image quality indices: MSE, PSNR, and SSIM.

PSNR uses the squared maximum of the ground truth over the MSE.  SSIM
averages the per-window index over all fully interior 7x7 sliding
windows with uniform weights and population (biased) moments, which
keeps every per-window value inside [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SsimConfig", "mse", "psnr", "ssim"]


@dataclass(frozen=True)
class SsimConfig:
    k1: float = 0.01
    k2: float = 0.03
    window: int = 7
    dynamic_range: float | None = None  # default: max - min of the ground truth

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and positive")


def _check_pair(x_hat, x):
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"image shapes differ: {x_hat.shape} vs {x.shape}")
    return x_hat, x


def mse(x_hat, x):
    """Mean squared error."""
    x_hat, x = _check_pair(x_hat, x)
    d = x_hat - x
    return float(np.mean(d * d))


def psnr(x_hat, x):
    """Peak signal-to-noise ratio in dB: 10 log10(max(x)^2 / MSE).

    ``x`` is the ground truth; identical inputs return +inf, a constant
    ground truth is an error (no meaningful peak).
    """
    x_hat, x = _check_pair(x_hat, x)
    if x.max() == x.min():
        raise ValueError("PSNR undefined for a constant ground-truth image")
    err = mse(x_hat, x)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(x.max() ** 2 / err))


def _window_sums(a, w):
    """Sums over all w x w sliding windows via an integral image."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[w:, w:] - c[:-w, w:] - c[w:, :-w] + c[:-w, :-w]


def ssim(x_hat, x, cfg: SsimConfig = SsimConfig()):
    """Mean structural similarity over sliding windows.

    The stabilization constants are C1 = (k1 L)^2 and C2 = (k2 L)^2 with
    L the ground-truth dynamic range (or ``cfg.dynamic_range`` if set).
    """
    x_hat, x = _check_pair(x_hat, x)
    w = cfg.window
    if x.shape[0] < w or x.shape[1] < w:
        raise ValueError(f"images smaller than the {w}x{w} SSIM window: {x.shape}")
    dyn = cfg.dynamic_range
    if dyn is None:
        dyn = float(x.max() - x.min())
    if dyn <= 0:
        raise ValueError("SSIM dynamic range must be positive; pass "
                         "SsimConfig(dynamic_range=...) for constant images")
    c1 = (cfg.k1 * dyn) ** 2
    c2 = (cfg.k2 * dyn) ** 2
    n = w * w
    mu1 = _window_sums(x_hat, w) / n
    mu2 = _window_sums(x, w) / n
    e11 = _window_sums(x_hat * x_hat, w) / n
    e22 = _window_sums(x * x, w) / n
    e12 = _window_sums(x_hat * x, w) / n
    var1 = e11 - mu1 * mu1
    var2 = e22 - mu2 * mu2
    cov = e12 - mu1 * mu2
    score = ((2 * mu1 * mu2 + c1) * (2 * cov + c2)
             / ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)))
    return float(score.mean())
