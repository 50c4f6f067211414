"""Shared fixtures: kernel-backend parametrization and dense oracles."""

import numpy as np
import pytest

from tomoforge import backend
from tomoforge.geometry import FanBeamGeometry
from tomoforge.projector import project


def _backend_id(mod):
    return mod.BACKEND_NAME


@pytest.fixture(params=backend.available_backends(), ids=_backend_id)
def kernels(request):
    """Run a test against every importable kernel backend."""
    return request.param


def dense_projector_matrix(geom: FanBeamGeometry, kernels=None):
    """Dense A built by projecting every unit-pixel image (oracle)."""
    n, m = geom.image_size
    a = np.zeros((geom.num_angles * geom.num_bins, n * m))
    for j in range(n * m):
        e = np.zeros(n * m)
        e[j] = 1.0
        a[:, j] = project(e.reshape(n, m), geom, kernels=kernels).ravel()
    return a


@pytest.fixture(scope="session")
def small_geom():
    """8x8 image, 12 angles x 16 bins: the dense-oracle desk instance."""
    return FanBeamGeometry.create(12, 16, 500.0, 500.0, (8, 8), 1.0)
