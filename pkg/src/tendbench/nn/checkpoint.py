"""Checkpoint wire format: a flat container of named arrays.

Layout (all integers little-endian, data row-major little-endian):

    magic   8 bytes  b"TBWEIGHT"
    version u32      currently 1
    count   u32      number of entries
    entry:  u16 name length, name utf-8,
            u8 dtype code (1=f64, 2=f32, 3=i64, 4=u64),
            u8 ndim, ndim x u32 dims, raw values

The format is deliberately dumb so other tooling can read it with a short
script and no dependencies.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"TBWEIGHT"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f8"): 1,
    np.dtype("<f4"): 2,
    np.dtype("<i8"): 3,
    np.dtype("<u8"): 4,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            code = _DTYPE_CODES.get(np.dtype(le.dtype.str))
            if code is None:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", code, le.ndim))
            fh.write(struct.pack(f"<{le.ndim}I", *le.shape))
            fh.write(le.tobytes(order="C"))


def load_arrays(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 16
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            code, ndim = struct.unpack_from("<BB", data, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            dtype = _CODE_DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
            arr = np.frombuffer(data, dtype=dtype, count=max(int(np.prod(shape)) if ndim else 1, 0),
                                offset=offset).reshape(shape)
            offset += nbytes
            out[name] = arr.copy()
    except (struct.error, KeyError, ValueError) as err:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({err})") from err
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes after last entry")
    return out
