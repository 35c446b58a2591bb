"""Binary tensor container used for all array artifacts (images, checkpoints, embeddings).

Layout, all little-endian:

    magic   4 bytes  b"MIDT"
    version u16
    count   u16      number of named entries
    entry*  name_len u16, name utf-8 bytes,
            dtype u8 (0 = u8, 1 = f32, 2 = u64),
            rank u8,
            dims rank x u64,
            payload row-major
"""

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MIDT"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("u1"), 1: np.dtype("<f4"), 2: np.dtype("<u8")}
_CODE_FOR_KIND = {"u1": 0, "f4": 1, "u8": 2}


class MidtError(ValueError):
    pass


def _code_for(arr: np.ndarray) -> int:
    key = f"{arr.dtype.kind}{arr.dtype.itemsize}"
    key = {"u1": "u1", "f4": "f4", "u8": "u8"}.get(key)
    if key is None:
        raise MidtError(f"unsupported dtype {arr.dtype}; expected u8, f32, or u64")
    return _CODE_FOR_KIND[key]


def write_midt(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors to `path`. Order of `tensors` is preserved."""
    if not tensors:
        raise MidtError("refusing to write an empty container")
    if len(tensors) > 0xFFFF:
        raise MidtError("too many entries")
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        code = _code_for(arr)
        arr = arr.astype(_DTYPE_CODES[code], copy=False)  # force little-endian
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".tmp-{path.name}")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


def read_midt(path: str | Path) -> dict[str, np.ndarray]:
    """Read a container back into {name: array}, entries in file order."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise MidtError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<HH", buf, 4)
    if version != FORMAT_VERSION:
        raise MidtError(f"{path}: unsupported container version {version}")
    off = 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        code, rank = struct.unpack_from("<BB", buf, off)
        off += 2
        if code not in _DTYPE_CODES:
            raise MidtError(f"{path}: unknown dtype code {code}")
        dims = struct.unpack_from(f"<{rank}Q", buf, off)
        off += 8 * rank
        dtype = _DTYPE_CODES[code]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        payload = buf[off : off + n_bytes]
        if len(payload) != n_bytes:
            raise MidtError(f"{path}: truncated payload for entry {name!r}")
        off += n_bytes
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    if off != len(buf):
        raise MidtError(f"{path}: {len(buf) - off} trailing bytes")
    return out
