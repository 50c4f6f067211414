"""4-D activation container used at the network boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tensor4:
    """A (batch, channels, height, width) activation array.

    ``grad`` holds d(loss)/d(data) after a backward pass when
    ``requires_grad`` is set.
    """

    data: np.ndarray
    requires_grad: bool = False
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ValueError(f"Tensor4 data must be 4-D, got shape {self.data.shape}")

    @classmethod
    def from_image(cls, img, dtype=np.float32, requires_grad=False):
        """Wrap a 2-D image as a (1, 1, N, M) tensor."""
        img = np.asarray(img)
        if img.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {img.shape}")
        return cls(img.astype(dtype)[None, None], requires_grad=requires_grad)

    def to_image(self):
        """Unwrap a (1, 1, N, M) tensor back into a 2-D image."""
        if self.data.shape[0] != 1 or self.data.shape[1] != 1:
            raise ValueError(f"not a single-image tensor: shape {self.data.shape}")
        return self.data[0, 0]

    @property
    def shape(self):
        return self.data.shape
