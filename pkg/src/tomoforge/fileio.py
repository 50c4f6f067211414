"""Portable image/sinogram file formats.

Two formats:

* Raw float: little-endian 32-bit floats (row-major) in ``name.raw``
  with a JSON sidecar ``name.json`` holding at least
  ``{"dims": [N, M], "dtype": "f32le", "min": ..., "max": ...,
  "description": ...}`` plus caller-supplied metadata.
* Binary PGM (P5), 8- or 16-bit, mapping [0, 1] linearly onto the full
  integer range; 16-bit samples are big-endian per the PGM spec.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

__all__ = ["FileFormatError", "write_raw", "read_raw", "write_pgm", "read_pgm",
           "sidecar_path"]


class FileFormatError(ValueError):
    """Malformed or inconsistent image file."""


def sidecar_path(path):
    path = pathlib.Path(path)
    return path.with_suffix(".json")


def write_raw(path, array, description="", extra=None):
    """Write a 2-D array as raw f32le plus a JSON sidecar.

    Returns the data path.  ``extra`` entries are merged into the sidecar
    (they must be JSON-serializable).
    """
    path = pathlib.Path(path)
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {array.shape}")
    data = np.ascontiguousarray(array, dtype="<f4")
    meta = {
        "dims": [int(array.shape[0]), int(array.shape[1])],
        "dtype": "f32le",
        "min": float(data.min()) if data.size else 0.0,
        "max": float(data.max()) if data.size else 0.0,
        "description": description,
    }
    if extra:
        overlap = set(extra) & set(meta)
        if overlap:
            raise ValueError(f"extra metadata would shadow sidecar fields: {sorted(overlap)}")
        meta.update(extra)
    path.write_bytes(data.tobytes())
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return path


def read_raw(path):
    """Read a raw f32le file with its sidecar; returns (array, metadata)."""
    path = pathlib.Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FileFormatError(f"missing JSON sidecar {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"malformed sidecar {side}: {exc}") from exc
    dims = meta.get("dims")
    if (not isinstance(dims, list) or len(dims) != 2
            or not all(isinstance(v, int) and v > 0 for v in dims)):
        raise FileFormatError(f"sidecar {side} has invalid dims: {dims!r}")
    if meta.get("dtype") != "f32le":
        raise FileFormatError(f"sidecar {side} declares unsupported dtype {meta.get('dtype')!r}")
    blob = path.read_bytes()
    expected = dims[0] * dims[1] * 4
    if len(blob) != expected:
        raise FileFormatError(
            f"{path}: expected {expected} bytes for dims {dims}, found "
            f"{len(blob)} (truncated at offset {len(blob)})")
    array = np.frombuffer(blob, dtype="<f4").reshape(dims)
    return array.copy(), meta


def write_pgm(path, array, bits=16):
    """Write an image as binary PGM, mapping [0, 1] to [0, 2^bits - 1].

    Values outside [0, 1] are clipped.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = pathlib.Path(path)
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {array.shape}")
    maxval = (1 << bits) - 1
    quant = np.rint(np.clip(array, 0.0, 1.0) * maxval)
    header = f"P5\n{array.shape[1]} {array.shape[0]}\n{maxval}\n".encode("ascii")
    payload = quant.astype(">u2" if bits == 16 else "u1").tobytes()
    path.write_bytes(header + payload)
    return path


def _parse_pgm_header(blob, path):
    """Parse 'P5 <w> <h> <maxval>' allowing comments; returns fields + offset."""
    fields = []
    pos = 0
    if blob[:2] != b"P5":
        raise FileFormatError(f"{path}: not a binary PGM (offset 0: {blob[:2]!r})")
    pos = 2
    while len(fields) < 3:
        if pos >= len(blob):
            raise FileFormatError(f"{path}: header truncated at offset {pos}")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            nl = blob.find(b"\n", pos)
            if nl < 0:
                raise FileFormatError(f"{path}: unterminated comment at offset {pos}")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise FileFormatError(
                f"{path}: unexpected byte {ch!r} in header at offset {pos}")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise FileFormatError(f"{path}: missing whitespace after maxval at offset {pos}")
    return fields, pos + 1


def read_pgm(path):
    """Read a binary PGM into floats in [0, 1]."""
    path = pathlib.Path(path)
    blob = path.read_bytes()
    (width, height, maxval), offset = _parse_pgm_header(blob, path)
    if maxval == 255:
        dtype, itemsize = "u1", 1
    elif maxval == 65535:
        dtype, itemsize = ">u2", 2
    else:
        raise FileFormatError(f"{path}: unsupported maxval {maxval}")
    expected = width * height * itemsize
    payload = blob[offset:]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: expected {expected} payload bytes at offset {offset}, "
            f"found {len(payload)}")
    raster = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return raster.astype(np.float64) / maxval
