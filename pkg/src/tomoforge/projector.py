"""Matched fan-beam projector pair.

``project`` applies the forward operator A (Joseph linear-interpolation
ray traversal); ``backproject`` applies its exact transpose A^T.  Both
are linear, run in double precision, and satisfy the adjoint identity
<A x, y> = <x, A^T y> up to floating-point rounding.
"""

from __future__ import annotations

import numpy as np

from tomoforge import backend
from tomoforge.geometry import FanBeamGeometry

__all__ = ["project", "backproject"]


def _check_image(img, geom: FanBeamGeometry):
    img = np.asarray(img)
    if img.ndim != 2 or img.shape != geom.image_size:
        raise ValueError(
            f"image shape {img.shape} does not match geometry image_size {geom.image_size}")
    return img


def _check_sino(sino, geom: FanBeamGeometry):
    sino = np.asarray(sino)
    if sino.ndim != 2 or sino.shape != geom.sinogram_shape:
        raise ValueError(
            f"sinogram shape {sino.shape} does not match geometry "
            f"(num_angles, num_bins) = {geom.sinogram_shape}")
    return sino


def project(img, geom: FanBeamGeometry, kernels=None):
    """Forward-project an image into a (num_angles, num_bins) sinogram."""
    img = _check_image(img, geom)
    k = kernels if kernels is not None else backend.kernels
    angles = geom.angles()
    return k.fan_project(
        img, np.cos(angles), np.sin(angles), geom.num_bins, geom.bin_pitch,
        geom.source_axis_dist, geom.axis_detector_dist, geom.pixel_size)


def backproject(sino, geom: FanBeamGeometry, kernels=None):
    """Apply the exact transpose of :func:`project` to a sinogram."""
    sino = _check_sino(sino, geom)
    k = kernels if kernels is not None else backend.kernels
    angles = geom.angles()
    n, m = geom.image_size
    return k.fan_backproject(
        sino, np.cos(angles), np.sin(angles), n, m, geom.bin_pitch,
        geom.source_axis_dist, geom.axis_detector_dist, geom.pixel_size)
