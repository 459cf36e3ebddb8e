"""Bit-exact binary tensor files ("HOMT") and checkpoint containers.

Record layout: magic b"HOMT", u8 version=1, u8 dtype (0 = float64),
u8 ndim, u8 reserved=0, then ndim little-endian u64 dims, then the data
little-endian. A checkpoint container is a sequence of records, each
prefixed by (u16 LE name length, UTF-8 name).
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .errors import IoError, TensorFormatError
from .tensor import as_tensor

MAGIC = b"HOMT"
VERSION = 1
DTYPE_F64 = 0


def write_tensor(buf, arr: np.ndarray) -> None:
    arr = as_tensor(arr)
    if arr.ndim > 255:
        raise TensorFormatError(f"ndim {arr.ndim} exceeds format limit")
    buf.write(MAGIC)
    buf.write(struct.pack("<BBBB", VERSION, DTYPE_F64, arr.ndim, 0))
    for d in arr.shape:
        buf.write(struct.pack("<Q", d))
    buf.write(arr.astype("<f8", copy=False).tobytes())


def read_tensor(buf) -> np.ndarray:
    head = buf.read(8)
    if len(head) != 8 or head[:4] != MAGIC:
        raise TensorFormatError("bad HOMT magic")
    version, dtype, ndim, reserved = struct.unpack("<BBBB", head[4:])
    if version != VERSION or dtype != DTYPE_F64 or reserved != 0:
        raise TensorFormatError(
            f"unsupported HOMT header: version={version} dtype={dtype} reserved={reserved}")
    dims = []
    for _ in range(ndim):
        raw = buf.read(8)
        if len(raw) != 8:
            raise TensorFormatError("truncated HOMT dims")
        dims.append(struct.unpack("<Q", raw)[0])
    count = 1
    for d in dims:
        count *= d
    raw = buf.read(8 * count)
    if len(raw) != 8 * count:
        raise TensorFormatError("truncated HOMT data")
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    return as_tensor(arr)


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write a named-tensor container atomically (temp file + rename)."""
    buf = io.BytesIO()
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise TensorFormatError(f"name too long: {name!r}")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        write_tensor(buf, arr)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_tensors(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    buf = io.BytesIO(data)
    out: dict[str, np.ndarray] = {}
    while True:
        raw = buf.read(2)
        if not raw:
            break
        if len(raw) != 2:
            raise TensorFormatError(f"truncated name length in {path}")
        (nlen,) = struct.unpack("<H", raw)
        name = buf.read(nlen)
        if len(name) != nlen:
            raise TensorFormatError(f"truncated name in {path}")
        out[name.decode("utf-8")] = read_tensor(buf)
    return out
