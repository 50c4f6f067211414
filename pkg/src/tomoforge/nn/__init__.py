"""Minimal tensor engine with reverse-mode differentiation.

Fixed operator set (3x3 convolution, batch normalization, LeakyReLU,
elementwise add) plus the AdamW optimizer: everything needed to build
and train the 30-layer per-image denoising network.
"""

from tomoforge.nn.layers import Add, BatchNorm2d, Conv2d, LeakyReLU, Param
from tomoforge.nn.network import (Network, NonFiniteError, build_denoiser,
                                  load_checkpoint, parameter_count,
                                  save_checkpoint)
from tomoforge.nn.optim import AdamW, Sgd
from tomoforge.nn.tensor import Tensor4

__all__ = [
    "Add", "AdamW", "BatchNorm2d", "Conv2d", "LeakyReLU", "Network",
    "NonFiniteError", "Param", "Sgd", "Tensor4", "build_denoiser",
    "load_checkpoint", "parameter_count", "save_checkpoint",
]
