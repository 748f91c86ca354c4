"""Per-cell rules reconciling the values that overlapping patches propose for a cell.

The scalar rules take the N proposals along axis 0 and broadcast over any
trailing axes, so the same function serves single cells and Monte-Carlo batches.
Variance-corrected rules are evaluated as

    weighted_mean(mu) + sum_i w_i (x_i - mu_i) / sqrt(sum_i w_i^2)

which equals sum_i w_i x_i / sqrt(sum w^2) + (1 - W / sqrt(sum w^2)) * weighted_mean(mu)
exactly, but keeps the residual term identically zero when every x_i equals mu_i.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from jointdiffusion.grid import Grid
from jointdiffusion.tiling import TileLayout


class Strategy(str, enum.Enum):
    MEAN = "md"
    GUIDED = "gf"


class VarianceMode(str, enum.Enum):
    PLAIN = "plain"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class FusionConfig:
    strategy: Strategy = Strategy.MEAN
    variance_mode: VarianceMode = VarianceMode.PLAIN

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "variance_mode", VarianceMode(self.variance_mode))

    @property
    def label(self) -> str:
        names = {
            (Strategy.MEAN, VarianceMode.PLAIN): "MD",
            (Strategy.GUIDED, VarianceMode.PLAIN): "GF",
            (Strategy.MEAN, VarianceMode.CORRECTED): "VCF",
            (Strategy.GUIDED, VarianceMode.CORRECTED): "VCF+GF",
        }
        return names[(self.strategy, self.variance_mode)]


ALL_CONFIGS = tuple(FusionConfig(s, v) for v in VarianceMode for s in Strategy)


def _stack(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[0] == 0:
        raise ValueError(f"{name} must hold at least one proposal")
    return arr


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def _weights(ws, n: int) -> np.ndarray:
    w = _stack(ws, "ws")
    if w.shape[0] != n:
        raise ValueError(f"got {w.shape[0]} weights for {n} proposals")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return w


def _all_equal(w: np.ndarray) -> bool:
    return bool(np.all(w == w[0]))


def fuse_mean(xs: Sequence[float]) -> float:
    x = _stack(xs, "xs")
    if x.shape[0] == 1:
        return _out(x[0].copy())
    return _out(x.sum(axis=0) / x.shape[0])


def fuse_guided(xs: Sequence[float], ws: Sequence[float]) -> float:
    x = _stack(xs, "xs")
    w = _weights(ws, x.shape[0])
    if x.shape[0] == 1 or _all_equal(w):
        return fuse_mean(x)
    w = w.reshape(w.shape + (1,) * (x.ndim - w.ndim))
    return _out((w * x).sum(axis=0) / w.sum(axis=0))


def fuse_vcf_uniform(xs: Sequence[float], mus: Sequence[float]) -> float:
    x, mu = _stack(xs, "xs"), _stack(mus, "mus")
    if x.shape != mu.shape:
        raise ValueError(f"xs {x.shape} and mus {mu.shape} differ in shape")
    n = x.shape[0]
    if n == 1:
        return _out(x[0].copy())
    return _out(mu.sum(axis=0) / n + (x - mu).sum(axis=0) / np.sqrt(n))


def fuse_vcf_weighted(xs: Sequence[float], mus: Sequence[float],
                      ws: Sequence[float]) -> float:
    x, mu = _stack(xs, "xs"), _stack(mus, "mus")
    if x.shape != mu.shape:
        raise ValueError(f"xs {x.shape} and mus {mu.shape} differ in shape")
    w = _weights(ws, x.shape[0])
    if x.shape[0] == 1 or _all_equal(w):
        return fuse_vcf_uniform(x, mu)
    w = w.reshape(w.shape + (1,) * (x.ndim - w.ndim))
    total = w.sum(axis=0)
    norm = np.sqrt((w * w).sum(axis=0))
    return _out((w * mu).sum(axis=0) / total + (w * (x - mu)).sum(axis=0) / norm)


def plain_variance_factor(ws: Sequence[float]) -> float:
    """Variance of the plain weighted average of i.i.d. unit-variance proposals."""
    w = np.asarray(ws, dtype=np.float64)
    return float((w * w).sum() / w.sum() ** 2)


def exclusive_masks(layout: TileLayout) -> list[np.ndarray]:
    """Per region, the window-shaped mask of cells no other region covers."""
    count = np.zeros(layout.canvas)
    for region in layout.regions:
        count[region.slices] += 1.0
    return [count[region.slices] == 1 for region in layout.regions]


def fuse_canvas(layout: TileLayout, xs: Sequence[Grid], mus: Sequence[Grid],
                guidance: Grid, config: FusionConfig) -> Grid:
    """Fuse per-patch proposals into one canvas.

    ``xs[i]`` and ``mus[i]`` belong to ``layout.regions[i]`` and may carry leading
    batch axes. Accumulation always runs in patch-index order, so the result does
    not depend on the order in which patches were evaluated. Cells covered by a
    single patch take that patch's value unchanged.
    """
    if len(xs) != len(layout) or len(mus) != len(layout):
        raise ValueError("need exactly one proposal per layout region")
    shape = np.shape(xs[0])[:-2] + tuple(layout.canvas)
    guided = config.strategy is Strategy.GUIDED
    corrected = config.variance_mode is VarianceMode.CORRECTED
    w_patch = np.asarray(guidance, dtype=np.float64) if guided else np.ones(layout.window)

    sum_w = np.zeros(layout.canvas)
    sum_w2 = np.zeros(layout.canvas)
    # plain: sum of w*x; corrected: sum of w*mu, with the residual sum kept apart
    acc = np.zeros(shape)
    res = np.zeros(shape) if corrected else None
    for region, x, mu in zip(layout.regions, xs, mus):
        rows, cols = region.slices
        sum_w[rows, cols] += w_patch
        target = acc[..., rows, cols]
        if corrected:
            sum_w2[rows, cols] += w_patch * w_patch
            target += w_patch * mu if guided else mu
            r = x - mu
            res[..., rows, cols] += w_patch * r if guided else r
        else:
            target += w_patch * x if guided else x

    acc /= sum_w
    if corrected:
        res /= np.sqrt(sum_w2)
        acc += res
    for region, x, own in zip(layout.regions, xs, exclusive_masks(layout)):
        if own.all():
            acc[..., region.slices[0], region.slices[1]] = x
        elif own.any():
            acc[..., region.slices[0], region.slices[1]][..., own] = x[..., own]
    return acc
