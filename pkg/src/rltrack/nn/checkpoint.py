"""Binary parameter checkpoints.

Layout (all little-endian):
    magic   4 bytes  b"NNCK"
    version u16      currently 1
    count   u32      number of named tensors
    per tensor:
        name_len u16, name utf-8 bytes,
        rank u8, dims u32 * rank,
        payload float32 * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import Module

MAGIC = b"NNCK"
VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(arrays)))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    try:
        version, count = struct.unpack_from("<HI", raw, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        offset = 10
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(dims)
            offset += 4 * n
            out[name] = arr.copy()
        return out
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc


def save_module(path, module: Module) -> None:
    save_arrays(path, module.state_dict())


def load_module(path, module: Module) -> None:
    module.load_state_dict(load_arrays(path))
