"""PST1 binary tensor file format.

Layout, all little-endian: magic bytes "PST1"; u8 dtype code (0 = float32,
1 = uint16, 2 = uint32); u8 ndim; ndim x u32 dims; row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .types import FormatError

MAGIC = b"PST1"

_CODE_TO_DTYPE = {
    0: np.dtype("<f4"),
    1: np.dtype("<u2"),
    2: np.dtype("<u4"),
}
_KIND_TO_CODE = {("f", 4): 0, ("u", 2): 1, ("u", 4): 2}


def write_pst(path: Union[str, Path], array: np.ndarray) -> None:
    """Write an array as PST1; dtype must be float32, uint16 or uint32."""
    arr = np.asarray(array)
    code = _KIND_TO_CODE.get((arr.dtype.kind, arr.dtype.itemsize))
    if code is None:
        raise FormatError(
            f"{path}: dtype {arr.dtype} not storable in PST1 "
            "(use float32, uint16 or uint32)"
        )
    if arr.ndim > 255:
        raise FormatError(f"{path}: rank {arr.ndim} exceeds the u8 ndim field")
    header = MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_CODE_TO_DTYPE[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_pst(path: Union[str, Path]) -> np.ndarray:
    """Read a PST1 file; every diagnostic names the offending file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: no such file") from exc
    if len(data) < 6:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    code, ndim = struct.unpack_from("<BB", data, 4)
    dtype = _CODE_TO_DTYPE.get(code)
    if dtype is None:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dims_end = 6 + 4 * ndim
    if len(data) < dims_end:
        raise FormatError(f"{path}: truncated dim list")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + count * dtype.itemsize
    if len(data) != expected:
        raise FormatError(
            f"{path}: payload is {len(data) - dims_end} bytes, "
            f"expected {count * dtype.itemsize} for shape {dims}"
        )
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=dims_end)
    return flat.reshape(dims).copy()
