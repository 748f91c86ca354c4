"""One-shot alignment of initial noise toward a shared reference by spherical interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jointdiffusion.grid import Grid, Region, RngStream, crop, gaussian_grid
from jointdiffusion.tiling import LayoutError

SMALL_ANGLE = 1e-6


@dataclass(frozen=True)
class StyleAlignConfig:
    alpha: float
    z_ref: Grid

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        z = np.asarray(self.z_ref, dtype=np.float64)
        if z.ndim != 2:
            raise ValueError(f"z_ref must be a 2-D window, got shape {z.shape}")
        object.__setattr__(self, "z_ref", z)

    @property
    def window(self) -> tuple[int, int]:
        return self.z_ref.shape

    @classmethod
    def from_seed(cls, alpha: float, window: tuple[int, int], seed: int) -> "StyleAlignConfig":
        z_ref = gaussian_grid(*window, RngStream(seed, "style-ref"))
        return cls(alpha, z_ref)


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=(-2, -1))


def slerp(p: Grid, q: Grid, alpha: float) -> Grid:
    """Spherical interpolation between grids viewed as flat vectors.

    ``p`` may carry leading batch axes; each member is interpolated separately.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-2:] != q.shape[-2:]:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    pn = np.sqrt(_inner(p, p))
    qn = np.sqrt(_inner(q, q))
    if np.any(pn == 0) or np.any(qn == 0):
        raise ValueError("slerp is undefined for an all-zero grid")
    if alpha == 0:
        return p.copy()
    if alpha == 1:
        return np.broadcast_to(q, np.broadcast_shapes(p.shape, q.shape)).copy()

    cos = np.clip(_inner(p, q) / (pn * qn), -1.0, 1.0)
    omega = np.arccos(cos)
    if np.any(np.pi - omega < SMALL_ANGLE):
        raise ValueError("slerp between antipodal grids has no unique path")
    omega = omega[..., None, None]
    small = omega < SMALL_ANGLE
    safe = np.where(small, 1.0, omega)
    sin = np.sin(safe)
    spherical = (np.sin((1 - alpha) * safe) * p + np.sin(alpha * safe) * q) / sin
    linear = (1 - alpha) * p + alpha * q
    return np.where(small, linear, spherical)


def tile_regions(canvas: tuple[int, int], window: tuple[int, int]) -> list[Region]:
    """Non-overlapping window tiling of the canvas; requires exact divisibility."""
    (ch, cw), (wh, ww) = canvas, window
    if ch % wh or cw % ww:
        raise LayoutError(
            f"canvas {ch}x{cw} is not divisible into {wh}x{ww} windows for style alignment"
        )
    return [Region(r, c, wh, ww) for r in range(0, ch, wh) for c in range(0, cw, ww)]


def apply_style_alignment(canvas_noise: Grid, cfg: StyleAlignConfig) -> Grid:
    canvas_noise = np.asarray(canvas_noise, dtype=np.float64)
    out = canvas_noise.copy()
    for region in tile_regions(canvas_noise.shape[-2:], cfg.window):
        rows, cols = region.slices
        out[..., rows, cols] = slerp(crop(canvas_noise, region), cfg.z_ref, cfg.alpha)
    return out


def pairwise_cosine(crops: list[Grid]) -> float:
    """Mean cosine similarity over all unordered pairs of crops."""
    if len(crops) < 2:
        raise ValueError("need at least two crops")
    flat = np.stack([np.ravel(c) for c in crops])
    flat = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    sims = flat @ flat.T
    iu = np.triu_indices(len(crops), k=1)
    return float(sims[iu].mean())
