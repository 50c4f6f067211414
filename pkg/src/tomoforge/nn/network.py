"""Sequential network, the 30-layer denoiser builder, and checkpoints.

Every forward/backward pass enforces the no-NaN contract: a non-finite
activation, gradient, or parameter aborts with a diagnostic naming the
offending layer.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

from tomoforge.nn.layers import BatchNorm2d, Conv2d, LeakyReLU
from tomoforge.nn.tensor import Tensor4

__all__ = [
    "Network", "NonFiniteError", "build_denoiser", "parameter_count",
    "save_checkpoint", "load_checkpoint",
]


class NonFiniteError(FloatingPointError):
    """Raised when a NaN/Inf shows up in activations, gradients, or params."""


def _ensure_finite(arr, context):
    # A single non-finite entry poisons the sum; only fall back to the
    # full elementwise scan when the cheap check trips.
    if not np.isfinite(float(arr.sum(dtype=np.float64))):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in {context}")


class Network:
    """An ordered layer list with a shared tape.

    ``forward`` threads an activation through every layer and records
    per-layer context; ``backward`` replays the tape in reverse,
    returning the gradient w.r.t. the network input and leaving parameter
    gradients on each layer's params.
    """

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        if isinstance(x, Tensor4):
            return Tensor4(self.forward(x.data), requires_grad=x.requires_grad)
        _ensure_finite(x, "network input")
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            _ensure_finite(x, f"output of layer {i} ({type(layer).__name__})")
        return x

    def backward(self, gy):
        if isinstance(gy, Tensor4):
            return Tensor4(self.backward(gy.data))
        _ensure_finite(gy, "gradient at network output")
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            gy = layer.backward(gy)
            _ensure_finite(gy, f"gradient into layer {i} ({type(layer).__name__})")
            for p in layer.params():
                _ensure_finite(p.grad, f"parameter gradient of layer {i} "
                                       f"({type(layer).__name__})")
        return gy

    def __call__(self, x):
        return self.forward(x)


def build_denoiser(mid_blocks=28, features=64, *, seed=0, dtype=np.float32,
                   slope=0.01, bn_eps=1e-5):
    """The per-image denoising CNN.

    Conv(1->features) -> LeakyReLU -> mid_blocks x [Conv -> BN -> LeakyReLU]
    -> Conv(features->1).  Defaults give the 30-convolution architecture.
    """
    rng = np.random.default_rng(seed)
    layers = [Conv2d(1, features, rng=rng, dtype=dtype, init_slope=slope),
              LeakyReLU(slope)]
    for _ in range(mid_blocks):
        layers.append(Conv2d(features, features, rng=rng, dtype=dtype, init_slope=slope))
        layers.append(BatchNorm2d(features, eps=bn_eps, dtype=dtype))
        layers.append(LeakyReLU(slope))
    layers.append(Conv2d(features, 1, rng=rng, dtype=dtype, init_slope=slope))
    return Network(layers)


def parameter_count(net: Network) -> int:
    return sum(p.value.size for p in net.parameters())


def _manifest(net: Network, seed):
    layers = []
    for layer in net.layers:
        entry = {"type": type(layer).__name__,
                 "param_shapes": [list(p.value.shape) for p in layer.params()]}
        layers.append(entry)
    return {"format": "tomoforge-checkpoint-v1", "dtype": "f32le",
            "seed": seed, "layers": layers,
            "param_count": parameter_count(net)}


def save_checkpoint(net: Network, path, seed=None):
    """Write parameters as raw little-endian float32 plus a JSON manifest."""
    path = pathlib.Path(path)
    blob = np.concatenate([
        np.ascontiguousarray(p.value, dtype="<f4").ravel()
        for p in net.parameters()])
    path.write_bytes(blob.tobytes())
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(_manifest(net, seed), sort_keys=True, indent=1))


def load_checkpoint(net: Network, path):
    """Load parameters saved by :func:`save_checkpoint` into ``net``."""
    path = pathlib.Path(path)
    manifest = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    expected = _manifest(net, manifest.get("seed"))
    if manifest.get("layers") != expected["layers"]:
        raise ValueError(f"checkpoint layer layout does not match network: {path}")
    blob = np.frombuffer(path.read_bytes(), dtype="<f4")
    if blob.size != parameter_count(net):
        raise ValueError(
            f"checkpoint holds {blob.size} values, network needs "
            f"{parameter_count(net)}: {path}")
    offset = 0
    for p in net.parameters():
        n = p.value.size
        p.value = blob[offset:offset + n].reshape(p.value.shape).astype(
            p.value.dtype)
        offset += n
    return manifest
