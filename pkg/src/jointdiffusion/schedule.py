"""Linear variance schedules, the closed-form forward marginal and reverse-process sigmas."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from jointdiffusion.grid import Grid


class SigmaVariant(str, enum.Enum):
    BETA = "beta"
    TILDE_BETA = "tilde"


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances beta_t for t = 1..T.

    Arrays are stored 0-based over t = 1..T; use :meth:`alpha_bar` for 1-based
    lookups that also accept the t = 0 convention (alpha_bar_0 = 1).
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if not (np.all(betas > 0) and np.all(betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        if np.any(np.diff(betas) < 0):
            raise ValueError("betas must be non-decreasing")
        betas = betas.copy()
        betas.setflags(write=False)
        alphas = 1.0 - betas
        alphas.setflags(write=False)
        alpha_bars = np.cumprod(alphas)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def _check_t(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not (lo <= t <= self.T):
            raise ValueError(f"timestep {t} outside [{lo}, {self.T}]")

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self._check_t(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])


def linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def default_schedule(T: int = 1000) -> NoiseSchedule:
    """Linear 1e-4..0.02 schedule at T = 1000, endpoints scaled by 1000/T otherwise.

    The scaling keeps the total injected noise (and so alpha_bar_T ~ 0) fixed when
    the chain is shortened, e.g. the T = 100 desk-scale runs.
    """
    scale = 1000.0 / T
    return linear_schedule(T, 1e-4 * scale, 0.02 * scale)


def forward_diffuse(x0: Grid, t: int, eps: Grid, schedule: NoiseSchedule) -> Grid:
    """Sample of q(x_t | x_0): sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    abar = schedule.alpha_bar(t)
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps


def sigma(schedule: NoiseSchedule, t: int, variant: SigmaVariant) -> float:
    beta = schedule.beta(t)
    variant = SigmaVariant(variant)
    if variant is SigmaVariant.BETA:
        return math.sqrt(beta)
    abar = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    return math.sqrt((1.0 - abar_prev) / (1.0 - abar) * beta)
