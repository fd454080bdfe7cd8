"""Little-endian ``BEVT`` tensor files.

Layout::

    offset 0   4 bytes   magic b"BEVT"
    offset 4   u16       version (1)
    offset 6   u8        dtype (1 = float32)
    offset 7   u8        ndim
    offset 8   ndim*u32  dims
    ...        payload, row-major, prod(dims) * 4 bytes
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"BEVT"
VERSION = 1
DTYPE_F32 = 1
_DTYPES = {DTYPE_F32: np.dtype("<f4")}


class TensorFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode_tensor(array) -> bytes:
    a = np.array(array, dtype="<f4", order="C")  # ascontiguousarray would turn 0-d into 1-d
    if a.ndim > 255:
        raise ValueError("too many dimensions")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise TensorFormatError("truncated header", len(buf))
    if buf[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {buf[:4]!r}", 0)
    version, dtype, ndim = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", 4)
    if dtype not in _DTYPES:
        raise TensorFormatError(f"unsupported dtype code {dtype}", 6)
    end = 8 + 4 * ndim
    if len(buf) < end:
        raise TensorFormatError("truncated dimension list", len(buf))
    dims = struct.unpack_from(f"<{ndim}I", buf, 8)
    dt = _DTYPES[dtype]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - end < nbytes:
        raise TensorFormatError(f"truncated payload: need {nbytes} bytes, have {len(buf) - end}", len(buf))
    if len(buf) - end > nbytes:
        raise TensorFormatError("trailing bytes after payload", end + nbytes)
    return np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=end).reshape(dims).copy()


def write_tensor(path: str | os.PathLike, array) -> None:
    with open(path, "wb") as f:
        f.write(encode_tensor(array))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())
