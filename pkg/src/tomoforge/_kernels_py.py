"""Pure-NumPy ray-tracing kernels.

Fallback implementation of the hot kernels, used when the compiled
extension ``tomoforge._kernels`` is unavailable (or forced via
``TOMOFORGE_KERNELS=python``).  Semantics match the Cython version:
Joseph-style linear-interpolation ray traversal for the forward
projector, its literal transpose for the backprojector, and a
pixel-driven distance-weighted backprojection for FBP.

All math is double precision; loops run over view angles with the
per-angle work vectorized over detector bins / pixels.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _ray_setup(cos_b, sin_b, num_bins, bin_pitch, d_so, d_ad, pixel_size, n_rows, n_cols):
    """Source and per-bin detector positions for one view, in pixel coords."""
    u = (np.arange(num_bins) - (num_bins - 1) / 2.0) * bin_pitch
    sxp = (-d_so * cos_b) / pixel_size + (n_cols - 1) / 2.0
    syp = (n_rows - 1) / 2.0 + (d_so * sin_b) / pixel_size
    dxp = (d_ad * cos_b - u * sin_b) / pixel_size + (n_cols - 1) / 2.0
    dyp = (n_rows - 1) / 2.0 - (d_ad * sin_b + u * cos_b) / pixel_size
    return sxp, syp, dxp, dyp


def fan_project(image, cos_a, sin_a, num_bins, bin_pitch, d_so, d_ad, pixel_size):
    """Fan-beam forward projection of ``image`` (N x M) -> (num_angles, num_bins)."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    n_rows, n_cols = image.shape
    num_angles = len(cos_a)
    sino = np.zeros((num_angles, num_bins))
    cols = np.arange(n_cols)
    rows = np.arange(n_rows)
    for a in range(num_angles):
        sxp, syp, dxp, dyp = _ray_setup(
            cos_a[a], sin_a[a], num_bins, bin_pitch, d_so, d_ad,
            pixel_size, n_rows, n_cols)
        wx = dxp - sxp
        wy = dyp - syp
        col_driven = np.abs(wx) >= np.abs(wy)

        if col_driven.any():
            slope = wy[col_driven] / wx[col_driven]
            step = pixel_size * np.sqrt(1.0 + slope * slope)
            yy = syp + (cols[None, :] - sxp) * slope[:, None]
            i0 = np.floor(yy).astype(np.intp)
            fy = yy - i0
            w_lo = np.where((i0 >= 0) & (i0 < n_rows), 1.0 - fy, 0.0)
            w_hi = np.where((i0 + 1 >= 0) & (i0 + 1 < n_rows), fy, 0.0)
            i_lo = np.clip(i0, 0, n_rows - 1)
            i_hi = np.clip(i0 + 1, 0, n_rows - 1)
            acc = (w_lo * image[i_lo, cols[None, :]]).sum(axis=1)
            acc += (w_hi * image[i_hi, cols[None, :]]).sum(axis=1)
            sino[a, col_driven] = step * acc

        row_driven = ~col_driven
        if row_driven.any():
            slope = wx[row_driven] / wy[row_driven]
            step = pixel_size * np.sqrt(1.0 + slope * slope)
            xx = sxp + (rows[None, :] - syp) * slope[:, None]
            j0 = np.floor(xx).astype(np.intp)
            fx = xx - j0
            w_lo = np.where((j0 >= 0) & (j0 < n_cols), 1.0 - fx, 0.0)
            w_hi = np.where((j0 + 1 >= 0) & (j0 + 1 < n_cols), fx, 0.0)
            j_lo = np.clip(j0, 0, n_cols - 1)
            j_hi = np.clip(j0 + 1, 0, n_cols - 1)
            acc = (w_lo * image[rows[None, :], j_lo]).sum(axis=1)
            acc += (w_hi * image[rows[None, :], j_hi]).sum(axis=1)
            sino[a, row_driven] = step * acc
    return sino


def fan_backproject(sino, cos_a, sin_a, n_rows, n_cols, bin_pitch, d_so, d_ad, pixel_size):
    """Exact transpose of :func:`fan_project`; (num_angles, num_bins) -> (N, M)."""
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    num_angles, num_bins = sino.shape
    flat = np.zeros(n_rows * n_cols)
    cols = np.arange(n_cols)
    rows = np.arange(n_rows)
    for a in range(num_angles):
        sxp, syp, dxp, dyp = _ray_setup(
            cos_a[a], sin_a[a], num_bins, bin_pitch, d_so, d_ad,
            pixel_size, n_rows, n_cols)
        wx = dxp - sxp
        wy = dyp - syp
        col_driven = np.abs(wx) >= np.abs(wy)

        if col_driven.any():
            slope = wy[col_driven] / wx[col_driven]
            step = pixel_size * np.sqrt(1.0 + slope * slope)
            val = sino[a, col_driven] * step
            yy = syp + (cols[None, :] - sxp) * slope[:, None]
            i0 = np.floor(yy).astype(np.intp)
            fy = yy - i0
            lo_ok = (i0 >= 0) & (i0 < n_rows)
            hi_ok = (i0 + 1 >= 0) & (i0 + 1 < n_rows)
            jj = np.broadcast_to(cols[None, :], yy.shape)
            idx = np.concatenate([
                (np.clip(i0, 0, n_rows - 1) * n_cols + jj)[lo_ok],
                (np.clip(i0 + 1, 0, n_rows - 1) * n_cols + jj)[hi_ok],
            ])
            wts = np.concatenate([
                (val[:, None] * (1.0 - fy))[lo_ok],
                (val[:, None] * fy)[hi_ok],
            ])
            flat += np.bincount(idx, weights=wts, minlength=flat.size)

        row_driven = ~col_driven
        if row_driven.any():
            slope = wx[row_driven] / wy[row_driven]
            step = pixel_size * np.sqrt(1.0 + slope * slope)
            val = sino[a, row_driven] * step
            xx = sxp + (rows[None, :] - syp) * slope[:, None]
            j0 = np.floor(xx).astype(np.intp)
            fx = xx - j0
            lo_ok = (j0 >= 0) & (j0 < n_cols)
            hi_ok = (j0 + 1 >= 0) & (j0 + 1 < n_cols)
            ii = np.broadcast_to(rows[None, :], xx.shape)
            idx = np.concatenate([
                (ii * n_cols + np.clip(j0, 0, n_cols - 1))[lo_ok],
                (ii * n_cols + np.clip(j0 + 1, 0, n_cols - 1))[hi_ok],
            ])
            wts = np.concatenate([
                (val[:, None] * (1.0 - fx))[lo_ok],
                (val[:, None] * fx)[hi_ok],
            ])
            flat += np.bincount(idx, weights=wts, minlength=flat.size)
    return flat.reshape(n_rows, n_cols)


def fbp_backproject(filtered, cos_a, sin_a, n_rows, n_cols, bin_pitch_iso, d_so, pixel_size):
    """Pixel-driven fan-beam backprojection of filtered detector rows.

    ``filtered`` is sampled on the virtual detector through the isocenter
    (spacing ``bin_pitch_iso``); each view contributes its interpolated
    value weighted by 1/U^2 with U = (d_so + t)/d_so.  The caller applies
    the overall angular quadrature factor.
    """
    filtered = np.ascontiguousarray(filtered, dtype=np.float64)
    num_angles, num_bins = filtered.shape
    x = (np.arange(n_cols) - (n_cols - 1) / 2.0) * pixel_size
    y = ((n_rows - 1) / 2.0 - np.arange(n_rows)) * pixel_size
    xg = x[None, :]
    yg = y[:, None]
    out = np.zeros((n_rows, n_cols))
    for a in range(num_angles):
        c, s = cos_a[a], sin_a[a]
        t = xg * c + yg * s
        u = (-xg * s + yg * c) * (d_so / (d_so + t))
        inv_u2 = (d_so / (d_so + t)) ** 2
        pos = u / bin_pitch_iso + (num_bins - 1) / 2.0
        k0 = np.floor(pos).astype(np.intp)
        fk = pos - k0
        lo_ok = (k0 >= 0) & (k0 < num_bins)
        hi_ok = (k0 + 1 >= 0) & (k0 + 1 < num_bins)
        row = filtered[a]
        val = np.where(lo_ok, row[np.clip(k0, 0, num_bins - 1)] * (1.0 - fk), 0.0)
        val += np.where(hi_ok, row[np.clip(k0 + 1, 0, num_bins - 1)] * fk, 0.0)
        out += val * inv_u2
    return out


def unfold3x3(x):
    """Unfold 3x3 zero-padded neighborhoods: (B, C, H, W) -> (9*C, B*H*W)."""
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    col = np.empty((9, c, b * h * w), dtype=x.dtype)
    for p in range(3):
        for q in range(3):
            col[3 * p + q] = xp[:, :, p:p + h, q:q + w].transpose(
                1, 0, 2, 3).reshape(c, b * h * w)
    return col.reshape(9 * c, b * h * w)


def fold3x3(cols, b, c, h, w):
    """Exact transpose of :func:`unfold3x3`: (9*C, B*H*W) -> (B, C, H, W)."""
    cols = cols.reshape(9, c, b, h, w)
    xp = np.zeros((b, c, h + 2, w + 2), dtype=cols.dtype)
    for p in range(3):
        for q in range(3):
            xp[:, :, p:p + h, q:q + w] += cols[3 * p + q].transpose(1, 0, 2, 3)
    return xp[:, :, 1:-1, 1:-1]
