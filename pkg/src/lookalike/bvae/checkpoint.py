"""Little-endian RSSM checkpoint container.

Layout: magic "RSSM", u16 version, u32 tensor count, then per tensor
(sorted by name): u16 name length, UTF-8 name, u8 rank, rank x u64 dims,
float32 row-major data. A u32 length-prefixed UTF-8 JSON blob with the
model configuration closes the file. Loading then saving reproduces the
bytes exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from .model import ModelConfig

_MAGIC = b"RSSM"
_VERSION = 1


def save_checkpoint(path, params: dict, config: ModelConfig) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", _VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())
        blob = config.to_json().encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _read_exact(fh, count, path):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"{path}: truncated checkpoint")
    return buf


def load_checkpoint(path):
    """Returns (params, ModelConfig)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise FormatError(f"{path}: not an RSSM checkpoint")
        version, count = struct.unpack("<HI", _read_exact(fh, 6, path))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported RSSM version {version}")
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path))
            name = _read_exact(fh, name_len, path).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, path))
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, path))
            n_bytes = 4 * int(np.prod(dims)) if rank else 4
            data = np.frombuffer(_read_exact(fh, n_bytes, path), dtype="<f4")
            params[name] = data.reshape(dims).copy()
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
        config = ModelConfig.from_json(_read_exact(fh, blob_len, path).decode("utf-8"))
    return params, config
