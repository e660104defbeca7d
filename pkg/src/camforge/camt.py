"""CAMT v1: a minimal little-endian container for 2-D and 3-D float grids.

Layout (all integers little-endian):

    bytes 0..3   magic ``CAMT``
    bytes 4..7   u32 version, must be 1
    byte  8      u8 dtype: 0 = float32, 1 = float64
    byte  9      u8 ndim: 2 or 3
    then         ndim x u64 dims (2-D: height, width; 3-D: channels, height, width)
    then         row-major payload, exactly prod(dims) values of the stated dtype

Readers reject bad magic, unknown version, unknown dtype, bad rank, and any
payload-length mismatch with distinct error codes.  Values are widened to
float64 in memory regardless of the on-disk dtype.  Writes are atomic
(temp file + rename).
"""

from __future__ import annotations

import math
import os
import struct
import tempfile

import numpy as np

from .cam_core import ScoreMap, Tensor3
from .errors import CamforgeError

_MOD = "camt"

MAGIC = b"CAMT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {"f32": 0, "f64": 1}


def write_atomic(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(tensor: Tensor3 | ScoreMap, dtype: str = "f64") -> bytes:
    """Serialize a tensor to CAMT bytes with the requested on-disk dtype."""
    if dtype not in _DTYPE_CODES:
        raise CamforgeError(_MOD, "bad_dtype", f"unsupported on-disk dtype {dtype!r}, use 'f32' or 'f64'")
    code = _DTYPE_CODES[dtype]
    data = tensor.data
    header = MAGIC + struct.pack("<I", VERSION) + struct.pack("<BB", code, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    return header + np.ascontiguousarray(data, dtype=_DTYPES[code]).tobytes()


def decode(raw: bytes) -> Tensor3 | ScoreMap:
    """Parse CAMT bytes into a ScoreMap (2-D) or Tensor3 (3-D)."""
    if raw[:4] != MAGIC:
        raise CamforgeError(_MOD, "bad_magic", "not a CAMT file (bad magic bytes)")
    if len(raw) < 10:
        raise CamforgeError(_MOD, "length_mismatch", "truncated CAMT header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CamforgeError(_MOD, "bad_version", f"unknown CAMT version {version}")
    dtype_code, ndim = struct.unpack_from("<BB", raw, 8)
    if dtype_code not in _DTYPES:
        raise CamforgeError(_MOD, "bad_dtype", f"unknown CAMT dtype code {dtype_code}")
    if ndim not in (2, 3):
        raise CamforgeError(_MOD, "bad_ndim", f"CAMT rank must be 2 or 3, got {ndim}")
    dims_end = 10 + 8 * ndim
    if len(raw) < dims_end:
        raise CamforgeError(_MOD, "length_mismatch", "truncated CAMT dims")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 10)
    if min(dims) < 1:
        raise CamforgeError(_MOD, "bad_dims", f"CAMT dims must all be >= 1, got {dims}")
    item = _DTYPES[dtype_code]
    expected = dims_end + math.prod(int(d) for d in dims) * item.itemsize
    if len(raw) != expected:
        raise CamforgeError(
            _MOD, "length_mismatch",
            f"payload length mismatch: file has {len(raw)} bytes, header implies {expected}")
    values = np.frombuffer(raw, dtype=item, offset=dims_end).reshape(dims)
    if ndim == 2:
        return ScoreMap(values)
    return Tensor3(values)


def write_camt(path, tensor: Tensor3 | ScoreMap, dtype: str = "f64") -> None:
    write_atomic(path, encode(tensor, dtype))


def read_camt(path) -> Tensor3 | ScoreMap:
    with open(path, "rb") as fh:
        return decode(fh.read())
