"""Per-image network training against the measured sinogram.

The reconstruction loop: start from the FBP image, push it through the
denoising network, and train the network weights to minimize

    L = (1/NM) ||y - A NN(x_f)||_1 + TV(NN(x_f))

where TV is the mean anisotropic total variation.  There is no
fidelity/regularization weight to tune.  The loop records loss/PSNR/SSIM
curves and returns the checkpoint-selected image.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from tomoforge.fbp import FilterSpec, fbp_reconstruct
from tomoforge.geometry import FanBeamGeometry
from tomoforge.metrics import SsimConfig, psnr, ssim
from tomoforge.nn import AdamW, Sgd, Tensor4, build_denoiser
from tomoforge.projector import _check_image, _check_sino, backproject, project

__all__ = ["ReconConfig", "ReconReport", "tv_value", "tv_subgradient",
           "loss", "reconstruct"]

_CHECKPOINT_MODES = ("best_psnr", "best_loss")
_OPTIMIZERS = ("adamw", "sgd")


@dataclass(frozen=True)
class ReconConfig:
    iterations: int = 2000
    lr: float = 1e-3
    seed: int = 0
    checkpoint_mode: str = "best_loss"
    curve_stride: int = 1
    optimizer: str = "adamw"
    weight_decay: float = 1e-2
    mid_blocks: int = 28
    features: int = 64

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.curve_stride < 1:
            raise ValueError("curve_stride must be >= 1")
        if self.checkpoint_mode not in _CHECKPOINT_MODES:
            raise ValueError(f"checkpoint_mode must be one of {_CHECKPOINT_MODES}")
        if self.optimizer not in _OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {_OPTIMIZERS}")


@dataclass
class ReconReport:
    final_image: np.ndarray
    best_iteration: int
    loss_curve: np.ndarray
    psnr_curve: np.ndarray | None
    ssim_curve: np.ndarray | None
    seconds_per_iteration: float
    initial_image: np.ndarray | None = None
    recorded_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def tv_value(img):
    """Mean anisotropic total variation.

    (1/NM) * (sum |x[i, j+1] - x[i, j]| + sum |x[i+1, j] - x[i, j]|).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"TV needs an image of at least 2x2, got {img.shape}")
    n, m = img.shape
    dh = np.abs(np.diff(img, axis=1)).sum()
    dv = np.abs(np.diff(img, axis=0)).sum()
    return float((dh + dv) / (n * m))


def tv_subgradient(img):
    """Subgradient of :func:`tv_value` with sign(0) = 0."""
    img = np.asarray(img, dtype=np.float64)
    n, m = img.shape
    g = np.zeros_like(img)
    sh = np.sign(np.diff(img, axis=1))
    g[:, 1:] += sh
    g[:, :-1] -= sh
    sv = np.sign(np.diff(img, axis=0))
    g[1:, :] += sv
    g[:-1, :] -= sv
    return g / (n * m)


def loss(y, x_hat, geom: FanBeamGeometry):
    """Training loss and its gradient w.r.t. the image.

    Returns ``(value, grad)`` with value = (1/NM) ||y - A x_hat||_1 +
    tv_value(x_hat).  The l1 subgradient uses sign(0) = 0.  By design
    there is no weighting between the two terms.
    """
    y = _check_sino(y, geom)
    x_hat = _check_image(x_hat, geom).astype(np.float64)
    n, m = x_hat.shape
    residual = project(x_hat, geom) - y
    value = float(np.abs(residual).sum() / (n * m)) + tv_value(x_hat)
    grad = backproject(np.sign(residual), geom) / (n * m) + tv_subgradient(x_hat)
    return value, grad


def _select_optimizer(cfg: ReconConfig, params):
    if cfg.optimizer == "adamw":
        return AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    return Sgd(params, lr=cfg.lr)


def reconstruct(y, geom: FanBeamGeometry, fbp_spec: FilterSpec = FilterSpec(),
                cfg: ReconConfig = ReconConfig(), ground_truth=None) -> ReconReport:
    """Train the denoising network on one measurement and return the result.

    ``ground_truth`` is required for checkpoint_mode="best_psnr" (the
    benchmarking protocol); "best_loss" selects by training loss and
    needs no reference.  Curves are recorded every ``cfg.curve_stride``
    iterations; seconds_per_iteration is the mean wall-clock time.
    """
    y = _check_sino(y, geom)
    if cfg.checkpoint_mode == "best_psnr" and ground_truth is None:
        raise ValueError("checkpoint_mode='best_psnr' requires a ground-truth image")
    if ground_truth is not None:
        ground_truth = _check_image(ground_truth, geom)

    x0 = fbp_reconstruct(y, geom, fbp_spec)
    net = build_denoiser(cfg.mid_blocks, cfg.features, seed=cfg.seed)
    optimizer = _select_optimizer(cfg, net.parameters())
    x_in = Tensor4.from_image(x0, dtype=np.float32)

    n_it = cfg.iterations
    if n_it == 0:
        out = net.forward(x_in).to_image().astype(np.float64)
        return ReconReport(out, 0, np.zeros(0), None, None, 0.0, x0,
                           np.zeros(0, dtype=int))

    n_rec = -(-n_it // cfg.curve_stride)  # ceil
    loss_curve = np.zeros(n_rec)
    rec_iters = np.zeros(n_rec, dtype=int)
    track_quality = ground_truth is not None
    psnr_curve = np.zeros(n_rec) if track_quality else None
    ssim_curve = np.zeros(n_rec) if track_quality else None
    ssim_cfg = SsimConfig()

    best_score = np.inf
    best_image = None
    best_iteration = 0
    t_start = time.perf_counter()
    for it in range(n_it):
        out = net.forward(x_in)
        x_hat = out.to_image().astype(np.float64)
        value, grad = loss(y, x_hat, geom)
        net.backward(Tensor4.from_image(grad, dtype=np.float32))
        optimizer.step()

        if track_quality:
            psnr_it = psnr(x_hat, ground_truth)
            ssim_it = ssim(x_hat, ground_truth, ssim_cfg)
        # Lower is better on either selection rule.
        score = -psnr_it if cfg.checkpoint_mode == "best_psnr" else value
        if score < best_score:
            best_score = score
            best_iteration = it
            best_image = x_hat
        if it % cfg.curve_stride == 0:
            slot = it // cfg.curve_stride
            rec_iters[slot] = it
            loss_curve[slot] = value
            if track_quality:
                psnr_curve[slot] = psnr_it
                ssim_curve[slot] = ssim_it
    seconds = (time.perf_counter() - t_start) / n_it

    return ReconReport(best_image, best_iteration, loss_curve, psnr_curve,
                       ssim_curve, seconds, x0, rec_iters)
