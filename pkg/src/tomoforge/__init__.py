"""tomoforge: dataset-free low-dose fan-beam CT reconstruction toolkit.

Simulates low-dose fan-beam measurements, reconstructs FBP and TV
baselines, and trains a per-image convolutional network against the
measured sinogram (l1 misfit + total-variation penalty) with no training
dataset and no fidelity/regularization weight to tune.
"""

from tomoforge.fbp import FilterSpec, build_filter, fbp_reconstruct
from tomoforge.geometry import FanBeamGeometry, default_detector_width
from tomoforge.metrics import SsimConfig, mse, psnr, ssim
from tomoforge.phantom import Ellipse, EllipsePhantomSpec, rasterize, shepp_logan
from tomoforge.projector import backproject, project
from tomoforge.recon import ReconConfig, ReconReport, loss, reconstruct, tv_value
from tomoforge.simulate import (CountsSinogram, INTENSITY_PRESETS,
                                counts_to_sinogram, normalize, simulate_counts)
from tomoforge.tv import TvConfig, tv_reconstruct

__version__ = "0.1.0"

__all__ = [
    "CountsSinogram", "Ellipse", "EllipsePhantomSpec", "FanBeamGeometry",
    "FilterSpec", "INTENSITY_PRESETS", "ReconConfig", "ReconReport",
    "SsimConfig", "TvConfig", "__version__", "backproject", "build_filter",
    "counts_to_sinogram", "default_detector_width", "fbp_reconstruct", "loss",
    "mse", "normalize", "phantom", "project", "psnr", "rasterize",
    "reconstruct", "shepp_logan", "simulate_counts", "ssim", "tv_reconstruct",
    "tv_value",
]
