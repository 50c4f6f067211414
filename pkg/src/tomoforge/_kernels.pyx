# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ray-tracing kernels.

Same contracts as ``tomoforge._kernels_py``: Joseph forward projection,
its literal transpose, and pixel-driven FBP backprojection.  Serial
loops with deterministic accumulation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt
from libc.string cimport memcpy

cnp.import_array()

BACKEND_NAME = "compiled"


def fan_project(image, cos_a, sin_a, int num_bins, double bin_pitch,
                double d_so, double d_ad, double pixel_size):
    """Fan-beam forward projection of ``image`` (N x M) -> (num_angles, num_bins)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ca = np.ascontiguousarray(cos_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.ascontiguousarray(sin_a, dtype=np.float64)
    cdef int n_rows = img.shape[0], n_cols = img.shape[1]
    cdef int num_angles = ca.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sino = np.zeros((num_angles, num_bins))
    cdef double half_u = (num_bins - 1) / 2.0
    cdef double cx = (n_cols - 1) / 2.0, cy = (n_rows - 1) / 2.0
    cdef int a, k, i, j, i0, j0
    cdef double c, s, u, sxp, syp, dxp, dyp, wx, wy, slope, step, pos, frac, acc
    for a in range(num_angles):
        c = ca[a]
        s = sa[a]
        sxp = (-d_so * c) / pixel_size + cx
        syp = cy + (d_so * s) / pixel_size
        for k in range(num_bins):
            u = (k - half_u) * bin_pitch
            dxp = (d_ad * c - u * s) / pixel_size + cx
            dyp = cy - (d_ad * s + u * c) / pixel_size
            wx = dxp - sxp
            wy = dyp - syp
            acc = 0.0
            if fabs(wx) >= fabs(wy):
                slope = wy / wx
                step = pixel_size * sqrt(1.0 + slope * slope)
                for j in range(n_cols):
                    pos = syp + (j - sxp) * slope
                    i0 = <int>floor(pos)
                    frac = pos - i0
                    if 0 <= i0 < n_rows:
                        acc += (1.0 - frac) * img[i0, j]
                    if 0 <= i0 + 1 < n_rows:
                        acc += frac * img[i0 + 1, j]
            else:
                slope = wx / wy
                step = pixel_size * sqrt(1.0 + slope * slope)
                for i in range(n_rows):
                    pos = sxp + (i - syp) * slope
                    j0 = <int>floor(pos)
                    frac = pos - j0
                    if 0 <= j0 < n_cols:
                        acc += (1.0 - frac) * img[i, j0]
                    if 0 <= j0 + 1 < n_cols:
                        acc += frac * img[i, j0 + 1]
            sino[a, k] = step * acc
    return sino


def fan_backproject(sino, cos_a, sin_a, int n_rows, int n_cols, double bin_pitch,
                    double d_so, double d_ad, double pixel_size):
    """Exact transpose of :func:`fan_project`; (num_angles, num_bins) -> (N, M)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sd = np.ascontiguousarray(sino, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ca = np.ascontiguousarray(cos_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.ascontiguousarray(sin_a, dtype=np.float64)
    cdef int num_angles = sd.shape[0], num_bins = sd.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img = np.zeros((n_rows, n_cols))
    cdef double half_u = (num_bins - 1) / 2.0
    cdef double cx = (n_cols - 1) / 2.0, cy = (n_rows - 1) / 2.0
    cdef int a, k, i, j, i0, j0
    cdef double c, s, u, sxp, syp, dxp, dyp, wx, wy, slope, step, pos, frac, val
    for a in range(num_angles):
        c = ca[a]
        s = sa[a]
        sxp = (-d_so * c) / pixel_size + cx
        syp = cy + (d_so * s) / pixel_size
        for k in range(num_bins):
            u = (k - half_u) * bin_pitch
            dxp = (d_ad * c - u * s) / pixel_size + cx
            dyp = cy - (d_ad * s + u * c) / pixel_size
            wx = dxp - sxp
            wy = dyp - syp
            if fabs(wx) >= fabs(wy):
                slope = wy / wx
                step = pixel_size * sqrt(1.0 + slope * slope)
                val = sd[a, k] * step
                for j in range(n_cols):
                    pos = syp + (j - sxp) * slope
                    i0 = <int>floor(pos)
                    frac = pos - i0
                    if 0 <= i0 < n_rows:
                        img[i0, j] += (1.0 - frac) * val
                    if 0 <= i0 + 1 < n_rows:
                        img[i0 + 1, j] += frac * val
            else:
                slope = wx / wy
                step = pixel_size * sqrt(1.0 + slope * slope)
                val = sd[a, k] * step
                for i in range(n_rows):
                    pos = sxp + (i - syp) * slope
                    j0 = <int>floor(pos)
                    frac = pos - j0
                    if 0 <= j0 < n_cols:
                        img[i, j0] += (1.0 - frac) * val
                    if 0 <= j0 + 1 < n_cols:
                        img[i, j0 + 1] += frac * val
    return img


def fbp_backproject(filtered, cos_a, sin_a, int n_rows, int n_cols,
                    double bin_pitch_iso, double d_so, double pixel_size):
    """Pixel-driven fan-beam backprojection with 1/U^2 distance weights."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(filtered, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ca = np.ascontiguousarray(cos_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.ascontiguousarray(sin_a, dtype=np.float64)
    cdef int num_angles = q.shape[0], num_bins = q.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_rows, n_cols))
    cdef double half_u = (num_bins - 1) / 2.0
    cdef double cx = (n_cols - 1) / 2.0, cy = (n_rows - 1) / 2.0
    cdef int a, i, j, k0
    cdef double c, s, x, y, t, ratio, u, pos, fk, val
    for a in range(num_angles):
        c = ca[a]
        s = sa[a]
        for i in range(n_rows):
            y = (cy - i) * pixel_size
            for j in range(n_cols):
                x = (j - cx) * pixel_size
                t = x * c + y * s
                ratio = d_so / (d_so + t)
                u = (-x * s + y * c) * ratio
                pos = u / bin_pitch_iso + half_u
                k0 = <int>floor(pos)
                fk = pos - k0
                val = 0.0
                if 0 <= k0 < num_bins:
                    val += q[a, k0] * (1.0 - fk)
                if 0 <= k0 + 1 < num_bins:
                    val += q[a, k0 + 1] * fk
                out[i, j] += val * ratio * ratio
    return out


ctypedef fused floating:
    float
    double


def unfold3x3(floating[:, :, :, ::1] x):
    """Unfold 3x3 zero-padded neighborhoods: (B, C, H, W) -> (9*C, B*H*W).

    Row 3*p + q of channel block c holds the input shifted by offset
    (p, q) of the kernel window.
    """
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    out_np = np.zeros((9 * c, b * h * w),
                      dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t p, q, ch, bb, i, row, base, ii, j0, j1, dj
    for p in range(3):
        for q in range(3):
            dj = q - 1
            j0 = 1 - q if q < 1 else 0
            j1 = w if q <= 1 else w - 1
            for ch in range(c):
                row = (3 * p + q) * c + ch
                for bb in range(b):
                    for i in range(h):
                        ii = i + p - 1
                        if ii < 0 or ii >= h:
                            continue
                        base = (bb * h + i) * w
                        memcpy(&out[row, base + j0], &x[bb, ch, ii, j0 + dj],
                               (j1 - j0) * sizeof(floating))
    return out_np


def fold3x3(floating[:, ::1] cols, Py_ssize_t b, Py_ssize_t c,
            Py_ssize_t h, Py_ssize_t w):
    """Exact transpose of :func:`unfold3x3`: (9*C, B*H*W) -> (B, C, H, W)."""
    out_np = np.zeros((b, c, h, w),
                      dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] out = out_np
    cdef Py_ssize_t p, q, ch, bb, i, j, row, base, ii, j0, j1, dj
    for p in range(3):
        for q in range(3):
            dj = q - 1
            j0 = 1 - q if q < 1 else 0
            j1 = w if q <= 1 else w - 1
            for ch in range(c):
                row = (3 * p + q) * c + ch
                for bb in range(b):
                    for i in range(h):
                        ii = i + p - 1
                        if ii < 0 or ii >= h:
                            continue
                        base = (bb * h + i) * w
                        for j in range(j0, j1):
                            out[bb, ch, ii, j + dj] += cols[row, base + j]
    return out_np
