"""2-D fan-beam acquisition geometry.

Coordinate conventions used throughout the package:

* World coordinates (x, y) in mm, isocenter (rotation axis) at the origin.
* Pixel (i, j) of an N x M image sits at x = (j - (M-1)/2) * pixel_size,
  y = ((N-1)/2 - i) * pixel_size, i.e. row 0 is the top of the image.
* At rotation angle beta the unit vector e(beta) = (cos beta, sin beta)
  points from the isocenter toward the detector center.  The source sits
  at -source_axis_dist * e, the detector center at axis_detector_dist * e.
* The flat detector is perpendicular to the central ray; bin k is centered
  at u_k = (k - (num_bins-1)/2) * bin_pitch along u(beta) = (-sin, cos),
  with bin_pitch = detector_width / num_bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["FanBeamGeometry", "default_detector_width"]


def default_detector_width(image_size, pixel_size, source_axis_dist, axis_detector_dist):
    """Detector width covering the magnified image diagonal with a 10% margin."""
    n, m = image_size
    diagonal = math.hypot(n, m) * pixel_size
    magnification = (source_axis_dist + axis_detector_dist) / source_axis_dist
    return 1.1 * diagonal * magnification


@dataclass(frozen=True)
class FanBeamGeometry:
    """Scan description shared by the projector, FBP, and the dose simulator.

    Distances are in mm; ``angle_range`` is the total rotation in radians
    (first view at angle 0, views equispaced over the range without
    including the endpoint).
    """

    num_angles: int
    num_bins: int
    source_axis_dist: float
    axis_detector_dist: float
    image_size: tuple[int, int]
    pixel_size: float
    detector_width: float
    angle_range: float = 2.0 * math.pi

    def __post_init__(self):
        if self.num_angles < 1:
            raise ValueError(f"num_angles must be >= 1, got {self.num_angles}")
        if self.num_bins < 1:
            raise ValueError(f"num_bins must be >= 1, got {self.num_bins}")
        for name in ("source_axis_dist", "axis_detector_dist", "detector_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.pixel_size <= 0:
            raise ValueError(f"pixel_size must be > 0, got {self.pixel_size}")
        n, m = self.image_size
        if n < 1 or m < 1:
            raise ValueError(f"image_size entries must be >= 1, got {self.image_size}")
        if self.angle_range <= 0:
            raise ValueError("angle_range must be > 0")
        object.__setattr__(self, "image_size", (int(n), int(m)))
        # Field of view must be inscribed in the scannable region: every
        # image pixel has to stay inside the fan of every view.
        half_diag = 0.5 * math.hypot(n, m) * self.pixel_size
        if half_diag > self.fov_radius() * (1.0 + 1e-12):
            raise ValueError(
                "image field of view (half-diagonal "
                f"{half_diag:.3f} mm) exceeds the scannable radius "
                f"{self.fov_radius():.3f} mm; enlarge detector_width or "
                "shrink the image"
            )

    @classmethod
    def create(cls, num_angles, num_bins, source_axis_dist, axis_detector_dist,
               image_size, pixel_size, detector_width=None, angle_range=2.0 * math.pi):
        """Build a geometry, sizing the detector by the default rule if absent."""
        if detector_width is None:
            detector_width = default_detector_width(
                image_size, pixel_size, source_axis_dist, axis_detector_dist)
        return cls(num_angles, num_bins, source_axis_dist, axis_detector_dist,
                   tuple(image_size), pixel_size, detector_width, angle_range)

    def fov_radius(self):
        """Radius of the region seen by the full detector in every view (mm)."""
        half_width_iso = 0.5 * self.detector_width * self.source_axis_dist / (
            self.source_axis_dist + self.axis_detector_dist)
        return self.source_axis_dist * math.sin(math.atan2(half_width_iso, self.source_axis_dist))

    @property
    def bin_pitch(self):
        """Detector bin spacing at the physical detector (mm)."""
        return self.detector_width / self.num_bins

    @property
    def bin_pitch_iso(self):
        """Bin spacing rescaled onto the virtual detector through the isocenter."""
        return self.bin_pitch * self.source_axis_dist / (
            self.source_axis_dist + self.axis_detector_dist)

    def angles(self):
        """View angles in radians: equispaced on [0, angle_range)."""
        return (self.angle_range / self.num_angles) * np.arange(self.num_angles)

    @property
    def sinogram_shape(self):
        return (self.num_angles, self.num_bins)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FanBeamGeometry":
        expected = {
            "num_angles", "num_bins", "source_axis_dist", "axis_detector_dist",
            "image_size", "pixel_size", "detector_width", "angle_range",
        }
        unknown = set(d) - expected
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        missing = expected - set(d)
        if missing:
            raise ValueError(f"missing geometry fields: {sorted(missing)}")
        d = dict(d)
        d["image_size"] = tuple(int(v) for v in d["image_size"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "FanBeamGeometry":
        return cls.from_dict(json.loads(text))
