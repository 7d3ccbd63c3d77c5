"""Named-tensor container used for checkpoints.

Layout (all integers little-endian):

    magic    8 bytes  b"HTNT0001" (version in the magic)
    n_meta   u32      then per item: key u32+utf8, value u32+utf8
    n_tensor u32      then per tensor:
        name  u32 + utf8
        dtype u8       0=float64 1=float32 2=int64 3=int32
        ndim  u8
        shape u64 * ndim
        data  raw little-endian values, C order

Tensors are written in sorted-name order so identical contents produce
identical bytes.
"""

import struct

import numpy as np

from ..errors import ParseError

MAGIC = b"HTNT0001"

_DTYPES = {0: "<f8", 1: "<f4", 2: "<i8", 3: "<i4"}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1,
          np.dtype(np.int64): 2, np.dtype(np.int32): 3}


def _write_str(fh, s):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_tensors(path, tensors, meta=None):
    meta = meta or {}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        for key in sorted(meta):
            _write_str(fh, key)
            _write_str(fh, str(meta[key]))
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            # ascontiguousarray would promote 0-d scalars to 1-d
            arr = np.asarray(tensors[name])
            if arr.dtype not in _CODES:
                arr = arr.astype(np.float64)
            if arr.ndim > 0:
                arr = np.ascontiguousarray(arr)
            _write_str(fh, name)
            fh.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_tensors(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ParseError(f"{path} is not a named-tensor container")
        (n_meta,) = struct.unpack("<I", fh.read(4))
        meta = {}
        for _ in range(n_meta):
            key = _read_str(fh)
            meta[key] = _read_str(fh)
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(n_tensors):
            name = _read_str(fh)
            code, ndim = struct.unpack("<BB", fh.read(2))
            if code not in _DTYPES:
                raise ParseError(f"unknown dtype code {code} in {path}")
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            dtype = np.dtype(_DTYPES[code])
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ParseError(f"truncated tensor {name!r} in {path}")
            tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return tensors, meta
