"""Low-dose measurement simulation.

Photon counts per detector bin are drawn as Poisson(I * exp(-[A x]_i) + sigma_i)
from a normalized ground-truth image, then converted to post-log
line-integral sinograms via the clamped Beer-Lambert inversion
-ln(max(counts - sigma, 0.1) / I).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from tomoforge.geometry import FanBeamGeometry
from tomoforge.projector import project

__all__ = [
    "CountsSinogram",
    "INTENSITY_PRESETS",
    "COUNT_CLAMP",
    "normalize",
    "simulate_counts",
    "counts_to_sinogram",
]

# X-ray source intensities used throughout the experiments (photons per ray).
INTENSITY_PRESETS = (1e3, 1e4, 5e4)

# Floor applied to background-corrected counts before the log transform.
COUNT_CLAMP = 0.1

# Means below this use exact inversion sampling; above, a rounded normal
# approximation.  Fixed so seeds reproduce across builds.
_POISSON_SPLIT = 30.0


@dataclass
class CountsSinogram:
    """Raw photon counts per detector bin, before post-log conversion."""

    counts: np.ndarray
    intensity: float
    background: float | np.ndarray = 0.0
    geometry: FanBeamGeometry | None = None
    seed: int | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if (self.counts < 0).any():
            raise ValueError("photon counts must be nonnegative")
        if self.intensity < 0:
            raise ValueError("intensity must be nonnegative")


def normalize(img):
    """Rescale an image to [0, 1] via (x - min) / (max - min).

    A constant image is degenerate (max == min); it maps to all zeros and
    raises a RuntimeWarning.
    """
    img = np.asarray(img, dtype=np.float64)
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    lo = img.min()
    hi = img.max()
    if hi == lo:
        warnings.warn("normalize: constant image, returning all zeros",
                      RuntimeWarning, stacklevel=2)
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def _sample_poisson(mean, u):
    """Seed-stable Poisson sampler: one uniform per bin.

    Inversion of the CDF for mean < 30; rounded normal approximation
    (via the inverse normal CDF) for mean >= 30.
    """
    mean = np.asarray(mean, dtype=np.float64)
    out = np.zeros(mean.shape)
    small = mean < _POISSON_SPLIT

    if small.any():
        lam = mean[small]
        target = u[small]
        k = np.zeros_like(lam)
        pmf = np.exp(-lam)
        cdf = pmf.copy()
        active = cdf < target
        # P(K > lam + 40 sqrt(lam) + 40) is negligible; the cap only guards
        # against pathological uniforms at machine resolution.
        for _ in range(400):
            if not active.any():
                break
            k[active] += 1.0
            pmf[active] *= lam[active] / k[active]
            cdf[active] += pmf[active]
            active = cdf < target
        out[small] = k

    big = ~small
    if big.any():
        lam = mean[big]
        z = ndtri(u[big])
        out[big] = np.maximum(np.rint(lam + np.sqrt(lam) * z), 0.0)
    return out


def simulate_counts(img, geom: FanBeamGeometry, intensity, background=0.0,
                    seed=0) -> CountsSinogram:
    """Draw low-dose photon counts for every (angle, bin) of the geometry.

    Bin (a, d) consumes the uniform at flat index a * num_bins + d of a
    counter-based Philox stream keyed by ``seed``, so results are
    reproducible and independent of evaluation order.
    """
    img = np.asarray(img, dtype=np.float64)
    if intensity < 0:
        raise ValueError("intensity must be nonnegative")
    background = np.asarray(background, dtype=np.float64)
    if (background < 0).any():
        raise ValueError("background must be nonnegative")
    if img.min() < -1e-12 or img.max() > 1.0 + 1e-12:
        warnings.warn("simulate_counts: image outside [0, 1]; normalize() first",
                      RuntimeWarning, stacklevel=2)
    line_integrals = project(img, geom)
    mean = intensity * np.exp(-line_integrals) + background
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    u = rng.random(mean.shape)
    counts = _sample_poisson(mean, u)
    return CountsSinogram(counts, float(intensity), background, geom, int(seed))


def counts_to_sinogram(c: CountsSinogram):
    """Post-log conversion of counts to line integrals.

    Each entry becomes -ln(max(counts - background, 0.1) / I); the clamp
    keeps zero-count bins finite.
    """
    if c.intensity <= 0:
        raise ValueError("post-log conversion requires intensity > 0")
    corrected = np.maximum(c.counts - c.background, COUNT_CLAMP)
    return -np.log(corrected / c.intensity)
