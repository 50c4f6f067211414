"""Projector pair: ray integrals, linearity, exact adjointness."""

import json

import numpy as np
import pytest

from conftest import dense_projector_matrix
from tomoforge.geometry import FanBeamGeometry, default_detector_width
from tomoforge.projector import backproject, project


def test_zero_image_projects_to_zero(kernels):
    geom = FanBeamGeometry.create(12, 16, 500.0, 500.0, (8, 8), 1.0)
    sino = project(np.zeros((8, 8)), geom, kernels=kernels)
    assert sino.shape == (12, 16)
    assert np.all(sino == 0.0)


def test_central_ray_of_disk_matches_chord_length(kernels):
    # Central ray through a centered disk integrates to 2 * r * mu.
    n = 256
    geom = FanBeamGeometry.create(4, 257, 500.0, 500.0, (n, n), 1.0)
    yy, xx = np.mgrid[0:n, 0:n]
    c = (n - 1) / 2.0
    r_mm, mu = 40.0, 0.01
    disk = (((xx - c) ** 2 + (yy - c) ** 2) <= r_mm ** 2) * mu
    sino = project(disk, geom, kernels=kernels)
    central = sino[0, 128]  # odd bin count -> bin 128 is the axis ray
    assert central == pytest.approx(2 * r_mm * mu, rel=0.01)


def test_projection_equals_dense_matrix_product(small_geom, kernels):
    a = dense_projector_matrix(small_geom, kernels)
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.standard_normal((8, 8))
        direct = project(x, small_geom, kernels=kernels)
        via_matrix = (a @ x.ravel()).reshape(small_geom.sinogram_shape)
        scale = np.abs(via_matrix).max()
        assert np.abs(direct - via_matrix).max() <= 1e-12 * max(scale, 1.0)


def test_backprojection_of_bin_impulse_matches_matrix_row(small_geom, kernels):
    a = dense_projector_matrix(small_geom, kernels)
    rng = np.random.default_rng(4)
    for flat in rng.choice(a.shape[0], size=6, replace=False):
        impulse = np.zeros(small_geom.sinogram_shape)
        impulse.ravel()[flat] = 1.0
        img = backproject(impulse, small_geom, kernels=kernels)
        assert np.abs(img.ravel() - a[flat]).max() <= 1e-12
        # nonzero only on pixels the ray actually crosses
        assert set(np.nonzero(img.ravel())[0]) == set(np.nonzero(a[flat])[0])


def test_adjoint_dot_product(kernels):
    geom = FanBeamGeometry.create(24, 32, 500.0, 500.0, (16, 16), 1.0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.standard_normal(geom.image_size)
        y = rng.standard_normal(geom.sinogram_shape)
        ax = project(x, geom, kernels=kernels)
        aty = backproject(y, geom, kernels=kernels)
        mismatch = abs(np.vdot(ax, y) - np.vdot(x, aty))
        assert mismatch <= 1e-10 * np.linalg.norm(ax) * np.linalg.norm(y)


def test_linearity(kernels):
    geom = FanBeamGeometry.create(10, 24, 400.0, 300.0, (12, 12), 1.0)
    rng = np.random.default_rng(6)
    x1 = rng.standard_normal(geom.image_size)
    x2 = rng.standard_normal(geom.image_size)
    a, b = 2.75, -0.51
    combined = project(a * x1 + b * x2, geom, kernels=kernels)
    separate = a * project(x1, geom, kernels=kernels) + b * project(x2, geom, kernels=kernels)
    assert np.abs(combined - separate).max() <= 1e-12 * np.abs(separate).max()


def test_rotationally_symmetric_phantom_gives_constant_rows(kernels):
    n = 128
    geom = FanBeamGeometry.create(180, 256, 500.0, 500.0, (n, n), 1.0)
    yy, xx = np.mgrid[0:n, 0:n]
    c = (n - 1) / 2.0
    r2 = (xx - c) ** 2 + (yy - c) ** 2
    blob = np.exp(-r2 / (2 * 18.0 ** 2))
    sino = project(blob, geom, kernels=kernels)
    spread = np.abs(sino - sino[0][None, :]).max()
    assert spread <= 0.01 * sino.max()


def test_dimension_mismatch_rejected():
    geom = FanBeamGeometry.create(12, 16, 500.0, 500.0, (8, 8), 1.0)
    with pytest.raises(ValueError, match="does not match"):
        project(np.zeros((9, 8)), geom)
    with pytest.raises(ValueError, match="does not match"):
        backproject(np.zeros((12, 17)), geom)


def test_cross_backend_agreement():
    from tomoforge import backend
    backends = backend.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend unavailable")
    geom = FanBeamGeometry.create(20, 48, 500.0, 500.0, (16, 16), 0.7)
    rng = np.random.default_rng(7)
    x = rng.standard_normal(geom.image_size)
    y = rng.standard_normal(geom.sinogram_shape)
    projections = [project(x, geom, kernels=k) for k in backends]
    backprojections = [backproject(y, geom, kernels=k) for k in backends]
    assert np.abs(projections[0] - projections[1]).max() <= 1e-12
    assert np.abs(backprojections[0] - backprojections[1]).max() <= 1e-12


class TestGeometry:
    def test_json_round_trip_uses_exact_field_names(self):
        geom = FanBeamGeometry.create(360, 512, 500.0, 500.0, (128, 128), 0.5)
        blob = json.loads(geom.to_json())
        assert set(blob) == {
            "num_angles", "num_bins", "source_axis_dist", "axis_detector_dist",
            "image_size", "pixel_size", "detector_width", "angle_range"}
        assert FanBeamGeometry.from_json(geom.to_json()) == geom

    def test_unknown_and_missing_fields_rejected(self):
        geom = FanBeamGeometry.create(12, 16, 500.0, 500.0, (8, 8), 1.0)
        blob = geom.to_dict()
        blob["detector_shape"] = "flat"
        with pytest.raises(ValueError, match="unknown geometry fields"):
            FanBeamGeometry.from_dict(blob)
        blob = geom.to_dict()
        del blob["pixel_size"]
        with pytest.raises(ValueError, match="missing geometry fields"):
            FanBeamGeometry.from_dict(blob)

    @pytest.mark.parametrize("field,value", [
        ("num_angles", 0), ("num_bins", 0), ("source_axis_dist", -1.0),
        ("axis_detector_dist", 0.0), ("pixel_size", 0.0), ("detector_width", -5.0),
    ])
    def test_invalid_parameters_rejected(self, field, value):
        kwargs = dict(num_angles=12, num_bins=16, source_axis_dist=500.0,
                      axis_detector_dist=500.0, image_size=(8, 8),
                      pixel_size=1.0, detector_width=80.0)
        kwargs[field] = value
        with pytest.raises(ValueError):
            FanBeamGeometry(**kwargs)

    def test_field_of_view_must_be_inscribed(self):
        # A detector far too narrow for the image diagonal is an error.
        with pytest.raises(ValueError, match="scannable radius"):
            FanBeamGeometry(12, 16, 500.0, 500.0, (64, 64), 1.0,
                            detector_width=10.0)

    def test_default_detector_width_has_margin(self):
        width = default_detector_width((128, 128), 0.5, 500.0, 500.0)
        diag = np.hypot(128, 128) * 0.5
        assert width == pytest.approx(1.1 * diag * 2.0)
        # and the default passes the inscribed-FOV invariant
        FanBeamGeometry.create(12, 16, 500.0, 500.0, (128, 128), 0.5)
