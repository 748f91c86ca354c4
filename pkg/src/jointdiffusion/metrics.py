"""Seam energy, ensemble moments, Kolmogorov-Smirnov distance and SSIM."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from jointdiffusion.grid import Grid


def _abs_col_diffs(grid: Grid) -> np.ndarray:
    return np.abs(np.diff(np.asarray(grid, dtype=np.float64), axis=-1))


def seam_energy(grid: Grid, boundary_cols: Sequence[int]) -> float:
    """Mean |x[r, c+1] - x[r, c]| over the boundary columns minus the same over all others.

    Negative values mean the boundaries are smoother than the rest of the grid.
    """
    diffs = _abs_col_diffs(grid)
    n = diffs.shape[-1]
    cols = sorted(set(int(c) for c in boundary_cols))
    if not cols:
        raise ValueError("need at least one boundary column")
    if cols[0] < 0 or cols[-1] >= n:
        raise ValueError(f"boundary columns must lie in [0, {n - 1}], got {cols}")
    mask = np.zeros(n, dtype=bool)
    mask[cols] = True
    boundary = diffs[..., mask].mean()
    baseline = diffs[..., ~mask].mean() if (~mask).any() else 0.0
    return float(boundary - baseline)


def ensemble_moments(samples: Sequence[Grid]) -> tuple[Grid, Grid]:
    """Per-pixel mean and unbiased variance across an ensemble."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[0] < 2:
        raise ValueError("need at least two samples")
    # shift by the first member: identical samples then give exactly zero variance
    d = arr - arr[0]
    return arr[0] + d.mean(axis=0), d.var(axis=0, ddof=1)


def ks_statistic(samples: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sup-norm distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    f = np.asarray(cdf(x), dtype=np.float64)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max(), 0.0))


def ks_statistic_columns(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """KS statistic for each column of an (n, ...) array of samples."""
    x = np.sort(np.asarray(samples, dtype=np.float64), axis=0)
    n = x.shape[0]
    f = np.asarray(cdf(x), dtype=np.float64)
    steps = np.arange(n, dtype=np.float64).reshape((n,) + (1,) * (x.ndim - 1))
    upper = (steps + 1) / n - f
    lower = f - steps / n
    return np.maximum(np.maximum(upper.max(axis=0), lower.max(axis=0)), 0.0)


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """One-sample KS statistic exceeded with probability ``alpha`` under the null."""
    return float(stats.kstwo.ppf(1.0 - alpha, n))


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    u = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (u / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _local_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    windows = sliding_window_view(x, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def ssim(a: Grid, b: Grid) -> float:
    """Mean structural similarity over all fully-contained 11x11 Gaussian windows.

    The dynamic range is the joint max - min of both inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need two equal-shape 2-D grids, got {a.shape} and {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"grids must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    data_range = max(a.max(), b.max()) - min(a.min(), b.min())
    if data_range == 0:
        data_range = 1.0
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    k = _gaussian_window()
    mu_a, mu_b = _local_mean(a, k), _local_mean(b, k)
    var_a = _local_mean(a * a, k) - mu_a**2
    var_b = _local_mean(b * b, k) - mu_b**2
    cov = _local_mean(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Named scalars plus optional per-pixel maps, serializable to JSON and CSV."""

    scalars: dict[str, float] = field(default_factory=dict)
    maps: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, name: str, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise FloatingPointError(f"metric {name} is not finite: {value}")
        self.scalars[name] = value

    def add_map(self, name: str, grid: Grid) -> None:
        grid = np.asarray(grid, dtype=np.float64)
        if not np.all(np.isfinite(grid)):
            raise FloatingPointError(f"map {name} has non-finite cells")
        self.maps[name] = grid

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "scalars": dict(self.scalars),
            "maps": {k: v.tolist() for k, v in self.maps.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name in sorted(self.scalars):
            writer.writerow([name, repr(self.scalars[name])])
        return buf.getvalue()
