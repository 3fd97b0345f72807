"""Binary PGM (P5) writer for visual inspection of snippets."""

from __future__ import annotations

import numpy as np


def write_pgm(path, matrix: np.ndarray) -> None:
    """Grayscale dump; values are min-max scaled to 0..255."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    scaled = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
