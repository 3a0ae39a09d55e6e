"""Named parameter blocks and their portable binary container.

Container layout (all integers little-endian):

    magic   8 bytes   b"GUILPS\\x00\\x01"  (format version 1)
    count   uint32    number of records
    record  repeated:
        name_len uint16, name utf-8 bytes,
        ndim     uint8,  shape uint32 * ndim,
        values   float64 * prod(shape), row-major
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

MAGIC = b"GUILPS\x00\x01"


class ParamSet(dict):
    """Ordered ``name -> float64 array`` mapping with fixed shapes."""

    def __setitem__(self, key, value):
        value = np.asarray(value, dtype=np.float64)
        if key in self and self[key].shape != value.shape:
            raise ValueError(f"shape of {key!r} is fixed at {self[key].shape}")
        super().__setitem__(key, value)

    def __init__(self, *args, **kw):
        super().__init__()
        for k, v in dict(*args, **kw).items():
            self[k] = v

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.items()})

    def subset(self, prefix: str) -> "ParamSet":
        return ParamSet({k: v for k, v in self.items() if k.startswith(prefix)})

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, v in self.items():
            h.update(k.encode())
            h.update(np.asarray(v, dtype="<f8").tobytes(order="C"))
        return h.hexdigest()


def dumps(params: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


def loads(buf: bytes) -> ParamSet:
    if buf[:8] != MAGIC:
        raise ValueError("not a parameter container (bad magic header)")
    (count,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    ps = ParamSet()
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nl].decode("utf-8")
        pos += nl
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        ps[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(buf):
        raise ValueError("trailing bytes in parameter container")
    return ps


def save(params: Mapping[str, np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> ParamSet:
    return loads(Path(path).read_bytes())
