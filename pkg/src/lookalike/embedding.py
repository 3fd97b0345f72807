"""Sinusoidal frequency embedding for latent feature vectors.

A frequency is mapped to one of ``seq_len`` chunks of the covered band, and
the chunk index k is expanded into a d-dimensional adjustment vector

    P(k, i) = sin(k / n**(i/d))        for even i
    P(k, i) = cos(k / n**((i-1)/d))    for odd i

which is added (scaled by ``weight``) to the latent vector. Entries lie in
[-1, 1], so the infinity norm of the adjustment never exceeds ``weight``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidConfig, OutOfBand, ShapeError


@dataclass
class EmbeddingConfig:
    d: int = 5
    n: float = 10_000.0
    seq_len: int = 1000
    band_start: float = 1.8e9
    band_width: float = 1.1e9
    weight: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.seq_len < 1 or not self.n > 1 or not self.band_width > 0:
            raise InvalidConfig(f"bad embedding config: {self}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "EmbeddingConfig":
        return cls(**json.loads(blob))


def positional_embedding(k: int, cfg: EmbeddingConfig) -> np.ndarray:
    """Adjustment vector for chunk index k; valid for 0 <= k <= seq_len."""
    if not 0 <= k <= cfg.seq_len:
        raise IndexError(f"k={k} outside [0, {cfg.seq_len}]")
    i = np.arange(cfg.d)
    exponent = np.where(i % 2 == 0, i, i - 1) / cfg.d
    phase = k / np.power(cfg.n, exponent)
    return np.where(i % 2 == 0, np.sin(phase), np.cos(phase))


def embedding_table(cfg: EmbeddingConfig) -> np.ndarray:
    """All embeddings for k = 0..seq_len, stacked as rows (precompute once)."""
    i = np.arange(cfg.d)
    exponent = np.where(i % 2 == 0, i, i - 1) / cfg.d
    phase = np.arange(cfg.seq_len + 1)[:, None] / np.power(cfg.n, exponent)[None, :]
    return np.where(i % 2 == 0, np.sin(phase), np.cos(phase))


def freq_to_index(f: float, cfg: EmbeddingConfig) -> int:
    """Chunk index of a frequency; the band is half-open on the right."""
    if not cfg.band_start <= f < cfg.band_start + cfg.band_width:
        raise OutOfBand(
            f"{f} Hz outside [{cfg.band_start}, {cfg.band_start + cfg.band_width})"
        )
    k = int((f - cfg.band_start) / cfg.band_width * cfg.seq_len)
    return min(k, cfg.seq_len - 1)


def embed_feature(z: np.ndarray, k: int, cfg: EmbeddingConfig) -> np.ndarray:
    """Latent vector plus the weighted positional adjustment."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (cfg.d,):
        raise ShapeError(f"feature length {z.shape} does not match embedding d={cfg.d}")
    return z + cfg.weight * positional_embedding(k, cfg)
