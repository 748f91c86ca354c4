"""Patch layouts over a canvas and the centre-weighted guidance map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jointdiffusion.grid import Grid, Region

Shape = tuple[int, int]


class LayoutError(ValueError):
    """A canvas/window/stride combination that cannot be tiled exactly."""


def _nearest_valid(extent: int, window: int, stride: int) -> list[int]:
    k = max(0, (extent - window) // stride)
    below = window + k * stride
    above = below + stride
    return sorted({below, above}, key=lambda v: (abs(v - extent), v))


@dataclass(frozen=True)
class TileLayout:
    canvas: Shape
    window: Shape
    stride: Shape
    regions: tuple[Region, ...]

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def counts(self) -> Shape:
        return tuple((c - w) // s + 1 for c, w, s in zip(self.canvas, self.window, self.stride))


def make_layout(canvas: Shape, window: Shape, stride: Shape) -> TileLayout:
    """Row-major grid of windows at offsets k * stride that tiles ``canvas`` exactly."""
    canvas, window, stride = tuple(canvas), tuple(window), tuple(stride)
    for axis, name in ((0, "height"), (1, "width")):
        c, w, s = canvas[axis], window[axis], stride[axis]
        if not 1 <= w <= c:
            raise LayoutError(f"window {name} {w} must be in [1, canvas {name} {c}]")
        if not 1 <= s <= w:
            raise LayoutError(f"stride {name} {s} must be in [1, window {name} {w}]")
        if (c - w) % s:
            valid = ", ".join(str(v) for v in _nearest_valid(c, w, s))
            raise LayoutError(
                f"canvas {name} {c} is not tiled exactly by window {w} at stride {s}; "
                f"nearest valid canvas {name}s: {valid}"
            )
    (ch, cw), (wh, ww), (sh, sw) = canvas, window, stride
    regions = tuple(
        Region(r, c, wh, ww)
        for r in range(0, ch - wh + 1, sh)
        for c in range(0, cw - ww + 1, sw)
    )
    return TileLayout(canvas, window, stride, regions)


def coverage_count(layout: TileLayout) -> Grid:
    out = np.zeros(layout.canvas, dtype=np.float64)
    for region in layout.regions:
        rows, cols = region.slices
        out[rows, cols] += 1.0
    return out


def seam_columns(layout: TileLayout) -> list[int]:
    """Columns c where a window edge falls between canvas columns c and c+1."""
    width = layout.canvas[1]
    cols = set()
    for region in layout.regions:
        left = region.col0 - 1
        right = region.col0 + region.width - 1
        cols.update(c for c in (left, right) if 0 <= c < width - 1)
    return sorted(cols)


def _tent(n: int) -> np.ndarray:
    # 1 on the central cell(s), falling linearly to 0 on the outermost cells
    if n <= 2:
        return np.ones(n)
    u = np.arange(n, dtype=np.float64)
    r = 1.0 if n % 2 == 0 else 0.0
    return 1.0 - (np.abs(2 * u - (n - 1)) - r) / ((n - 1) - r)


def make_guidance_map(window: Shape, floor: float = 1e-4) -> Grid:
    """Separable tent weights, 1 at the centre and ``floor`` on the window border."""
    h, w = window
    if h < 1 or w < 1:
        raise ValueError(f"window dims must be >= 1, got {window}")
    if not 0 < floor < 1:
        raise ValueError(f"floor must be in (0, 1), got {floor}")
    return np.maximum(floor, np.outer(_tent(h), _tent(w)))
