"""Ellipse phantoms and the Shepp-Logan head phantom.

Rasterization samples each pixel at its center (no anti-aliasing), so a
given spec and size always produce bit-identical images.  Ellipse
intensities are additive, matching the classic phantom definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tomoforge.simulate import normalize

__all__ = ["Ellipse", "EllipsePhantomSpec", "rasterize", "shepp_logan", "SHEPP_LOGAN_ELLIPSES"]


@dataclass(frozen=True)
class Ellipse:
    """One additive ellipse in [-1, 1]^2 coordinates.

    ``a`` and ``b`` are the semi-axes along the (rotated) x and y
    directions; ``theta`` rotates the ellipse counterclockwise (radians).
    """

    cx: float
    cy: float
    a: float
    b: float
    theta: float
    value: float


@dataclass(frozen=True)
class EllipsePhantomSpec:
    ellipses: tuple[Ellipse, ...]

    def mirrored(self) -> "EllipsePhantomSpec":
        """Left-right mirrored copy of the spec."""
        return EllipsePhantomSpec(tuple(
            Ellipse(-e.cx, e.cy, e.a, e.b, -e.theta, e.value) for e in self.ellipses))


# Modified (high-contrast) Shepp-Logan values, the de-facto standard in
# reconstruction code.  (cx, cy, a, b, theta_deg, additive value)
SHEPP_LOGAN_ELLIPSES = EllipsePhantomSpec(tuple(
    Ellipse(cx, cy, a, b, math.radians(deg), v) for cx, cy, a, b, deg, v in [
        (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
        (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
        (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
        (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
        (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
        (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
        (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
        (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
        (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
        (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
    ]))


def rasterize(spec: EllipsePhantomSpec, n, m=None):
    """Rasterize an ellipse spec onto an n x m grid spanning [-1, 1]^2."""
    if m is None:
        m = n
    x = (2.0 * np.arange(m) + 1.0) / m - 1.0
    y = 1.0 - (2.0 * np.arange(n) + 1.0) / n
    xg = x[None, :]
    yg = y[:, None]
    img = np.zeros((n, m))
    for e in spec.ellipses:
        if not all(math.isfinite(v) for v in (e.cx, e.cy, e.a, e.b, e.theta, e.value)):
            raise ValueError(f"non-finite ellipse parameter in {e}")
        dx = xg - e.cx
        dy = yg - e.cy
        ct = math.cos(e.theta)
        st = math.sin(e.theta)
        inside = ((dx * ct + dy * st) / e.a) ** 2 + ((-dx * st + dy * ct) / e.b) ** 2 <= 1.0
        img += np.where(inside, e.value, 0.0)
    return img


def shepp_logan(n):
    """Standard Shepp-Logan head phantom, n x n, normalized to [0, 1]."""
    if n < 16:
        raise ValueError(f"phantom size must be >= 16, got {n}")
    return normalize(rasterize(SHEPP_LOGAN_ELLIPSES, n))
