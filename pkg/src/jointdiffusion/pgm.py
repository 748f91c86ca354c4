"""Binary greyscale PGM (P5) output with an affine min/max mapping to 0..255."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from jointdiffusion.grid import Grid


@dataclass(frozen=True)
class PgmMapping:
    """Pixel value p encodes lo + p * (hi - lo) / 255."""

    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"min": self.lo, "max": self.hi, "levels": 255}


def encode_pgm(grid: Grid) -> tuple[bytes, PgmMapping]:
    x = np.asarray(grid, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"PGM needs a 2-D grid, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("cannot encode non-finite values")
    lo, hi = float(x.min()), float(x.max())
    span = hi - lo
    scaled = np.zeros_like(x) if span == 0 else (x - lo) / span * 255.0
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    header = f"P5\n{x.shape[1]} {x.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes(), PgmMapping(lo, hi)


def write_pgm(path: str | Path, grid: Grid) -> PgmMapping:
    data, mapping = encode_pgm(grid)
    Path(path).write_bytes(data)
    return mapping


def read_pgm(path: str | Path) -> np.ndarray:
    """Raw 0..255 pixel values of a P5 file written by :func:`write_pgm`."""
    data = Path(path).read_bytes()
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path} is not an 8-bit P5 file")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
