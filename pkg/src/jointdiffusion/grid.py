"""Dense 2-D grids, rectangular regions and keyed random streams.

A grid is a float64 numpy array whose last two axes are (height, width).
Leading axes, when present, are independent ensemble members; every
operation in the package acts on the last two axes only.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

Grid = np.ndarray


@dataclass(frozen=True)
class Region:
    row0: int
    col0: int
    height: int
    width: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return (
            slice(self.row0, self.row0 + self.height),
            slice(self.col0, self.col0 + self.width),
        )

    def fits(self, height: int, width: int) -> bool:
        return (
            self.row0 >= 0
            and self.col0 >= 0
            and self.height >= 1
            and self.width >= 1
            and self.row0 + self.height <= height
            and self.col0 + self.width <= width
        )


def _check_region(grid: Grid, region: Region) -> None:
    h, w = grid.shape[-2:]
    if not region.fits(h, w):
        raise IndexError(f"region {region} does not lie inside a {h}x{w} grid")


def crop(grid: Grid, region: Region) -> Grid:
    """Copy of the cells of ``grid`` under ``region``."""
    _check_region(grid, region)
    rows, cols = region.slices
    return np.array(grid[..., rows, cols], dtype=np.float64, copy=True)


def scatter(grid: Grid, region: Region, patch: Grid) -> Grid:
    """Return a copy of ``grid`` with ``patch`` written into ``region``."""
    _check_region(grid, region)
    if patch.shape[-2:] != (region.height, region.width):
        raise ValueError(
            f"patch shape {patch.shape[-2:]} does not match region {region}"
        )
    out = np.array(grid, dtype=np.float64, copy=True)
    rows, cols = region.slices
    out[..., rows, cols] = patch
    return out


def _purpose_id(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """Random stream identified by a master seed and a (purpose, patch, timestep) key.

    The same key always reproduces the same sequence, whatever order streams are
    opened in, so patches can be evaluated in any order or in parallel.
    """

    master_seed: int
    purpose: str
    patch: int = 0
    timestep: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.patch < 0 or self.timestep < 0:
            raise ValueError(f"stream key entries must be non-negative: {self}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed,
            spawn_key=(_purpose_id(self.purpose), self.patch, self.timestep),
        )
        return np.random.Generator(np.random.PCG64(seq))

    def with_key(self, purpose: str | None = None, patch: int | None = None,
                 timestep: int | None = None) -> "RngStream":
        return RngStream(
            self.master_seed,
            self.purpose if purpose is None else purpose,
            self.patch if patch is None else patch,
            self.timestep if timestep is None else timestep,
        )


def gaussian_grid(height: int, width: int, stream: RngStream,
                  batch: int | None = None) -> Grid:
    """I.i.d. standard-normal grid drawn from ``stream``.

    With ``batch`` the result has shape (batch, height, width), all drawn from the
    one stream.
    """
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {height}x{width}")
    shape = (height, width) if batch is None else (batch, height, width)
    if batch is not None and batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    return stream.generator().standard_normal(shape)
