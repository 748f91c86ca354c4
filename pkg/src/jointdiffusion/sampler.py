"""DDPM/DDIM step rules, single-patch sampling and the joint tiled denoising loop."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from jointdiffusion.denoiser import Denoiser
from jointdiffusion.fusion import FusionConfig, VarianceMode, fuse_canvas
from jointdiffusion.grid import Grid, RngStream, crop, gaussian_grid
from jointdiffusion.schedule import NoiseSchedule, SigmaVariant, sigma
from jointdiffusion.style import StyleAlignConfig, apply_style_alignment
from jointdiffusion.tiling import TileLayout

StepCallback = Callable[[int, Grid], None]


@dataclass(frozen=True)
class StepOutput:
    x_prev: Grid
    mean: Grid


class SamplerType(str, enum.Enum):
    DDPM = "ddpm"
    DDIM = "ddim"


@dataclass(frozen=True)
class SamplerKind:
    """DDPM runs every timestep of the schedule; DDIM a uniform subsequence of ``steps``."""

    type: SamplerType = SamplerType.DDPM
    sigma_variant: SigmaVariant = SigmaVariant.BETA
    steps: int = 50

    def __post_init__(self):
        object.__setattr__(self, "type", SamplerType(self.type))
        object.__setattr__(self, "sigma_variant", SigmaVariant(self.sigma_variant))
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def stochastic(self) -> bool:
        return self.type is SamplerType.DDPM

    def transitions(self, schedule: NoiseSchedule) -> list[tuple[int, int]]:
        """(t, t_next) pairs visited from t = T down to 0."""
        T = schedule.T
        if self.type is SamplerType.DDPM:
            return [(t, t - 1) for t in range(T, 0, -1)]
        if self.steps > T:
            raise ValueError(f"DDIM steps {self.steps} exceed schedule length {T}")
        ts = np.round(np.linspace(T, 0, self.steps + 1)).astype(int)
        return [(int(a), int(b)) for a, b in zip(ts[:-1], ts[1:])]


def _same_shape(*grids: Grid) -> None:
    shapes = {np.shape(g) for g in grids}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")


def ddpm_step(x_t: Grid, eps_hat: Grid, t: int, schedule: NoiseSchedule,
              variant: SigmaVariant, z: Grid) -> StepOutput:
    _same_shape(x_t, eps_hat, z)
    beta, alpha, abar = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
    mean = (x_t - beta / math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(alpha)
    return StepOutput(mean + sigma(schedule, t, variant) * z, mean)


def ddim_step(x_t: Grid, eps_hat: Grid, t: int, t_next: int,
              schedule: NoiseSchedule) -> StepOutput:
    """Deterministic (eta = 0) update; the returned mean is the sample itself."""
    _same_shape(x_t, eps_hat)
    if t_next >= t:
        raise ValueError(f"t_next={t_next} must precede t={t}")
    abar, abar_next = schedule.alpha_bar(t), schedule.alpha_bar(t_next)
    x0_hat = (x_t - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
    x_prev = math.sqrt(abar_next) * x0_hat + math.sqrt(1.0 - abar_next) * eps_hat
    return StepOutput(x_prev, x_prev)


def _patch_step(x_t: Grid, t: int, t_next: int, denoiser: Denoiser, kind: SamplerKind,
                schedule: NoiseSchedule, seed: int, patch: int,
                z: Grid | None = None) -> StepOutput:
    eps_hat = denoiser(x_t, t, schedule)
    if not kind.stochastic:
        return ddim_step(x_t, eps_hat, t, t_next, schedule)
    if t == 1:
        z = np.zeros_like(x_t)
    elif z is None:
        h, w = x_t.shape[-2:]
        batch = x_t.shape[0] if x_t.ndim == 3 else None
        z = gaussian_grid(h, w, RngStream(seed, "step", patch, t), batch)
    return ddpm_step(x_t, eps_hat, t, schedule, kind.sigma_variant, z)


def _init_noise(shape: tuple[int, int], seed: int, batch: int | None) -> Grid:
    return gaussian_grid(*shape, RngStream(seed, "init"), batch)


def sample_single(denoiser: Denoiser, kind: SamplerKind, schedule: NoiseSchedule,
                  shape: tuple[int, int], seed: int, *, batch: int | None = None,
                  patch_index: int = 0, x_T: Grid | None = None) -> Grid:
    """Run one patch from x_T ~ N(0, I) down to x_0.

    ``patch_index`` selects the noise substream, so a run can be matched against
    the corresponding patch of a joint run started from the same ``x_T``.
    """
    x = _init_noise(shape, seed, batch) if x_T is None else np.array(x_T, dtype=np.float64)
    for t, t_next in kind.transitions(schedule):
        x = _patch_step(x, t, t_next, denoiser, kind, schedule, seed, patch_index).x_prev
    return x


def joint_step(canvas: Grid, t: int, t_next: int, denoiser: Denoiser, kind: SamplerKind,
               schedule: NoiseSchedule, layout: TileLayout, guidance: Grid,
               fusion: FusionConfig, seed: int, *, order: Sequence[int] | None = None,
               pool: ThreadPoolExecutor | None = None, shared_noise: bool = False) -> Grid:
    """Denoise every patch of ``canvas`` one step and fuse the overlaps.

    Each patch normally draws its own noise. With ``shared_noise`` every patch
    instead crops one canvas-wide draw, so overlapping patches inject identical z.
    """
    n = len(layout)
    order = range(n) if order is None else order
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the patch indices")
    z_canvas = None
    if shared_noise and kind.stochastic and t > 1:
        batch = canvas.shape[0] if canvas.ndim == 3 else None
        z_canvas = gaussian_grid(*layout.canvas, RngStream(seed, "step-shared", 0, t), batch)

    def run(i: int) -> StepOutput:
        region = layout.regions[i]
        z = None if z_canvas is None else crop(z_canvas, region)
        return _patch_step(crop(canvas, region), t, t_next, denoiser, kind, schedule, seed, i, z)

    outputs: list[StepOutput | None] = [None] * n
    if pool is None:
        for i in order:
            outputs[i] = run(i)
    else:
        for i, out in zip(order, pool.map(run, order)):
            outputs[i] = out
    if fusion.variance_mode is VarianceMode.CORRECTED and any(o.mean is None for o in outputs):
        raise RuntimeError("variance-corrected fusion needs per-patch means")
    return fuse_canvas(layout, [o.x_prev for o in outputs], [o.mean for o in outputs],
                       guidance, fusion)


def sample_joint(denoiser: Denoiser, kind: SamplerKind, schedule: NoiseSchedule,
                 layout: TileLayout, guidance: Grid, fusion: FusionConfig,
                 sa: StyleAlignConfig | None, seed: int, *, batch: int | None = None,
                 order: Sequence[int] | None = None, workers: int = 1,
                 callback: StepCallback | None = None, shared_noise: bool = False) -> Grid:
    """Generate a full canvas by joint denoising of the overlapping patches in ``layout``.

    The canvas starts as standard normal noise (style-aligned once if ``sa`` is
    given). Each timestep crops every patch, denoises it with its own keyed noise,
    then writes the fused canvas back before the next step.
    """
    if np.shape(guidance) != tuple(layout.window):
        raise ValueError(f"guidance {np.shape(guidance)} != window {layout.window}")
    canvas = _init_noise(layout.canvas, seed, batch)
    if sa is not None:
        canvas = apply_style_alignment(canvas, sa)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for t, t_next in kind.transitions(schedule):
            canvas = joint_step(canvas, t, t_next, denoiser, kind, schedule, layout,
                                guidance, fusion, seed, order=order, pool=pool,
                                shared_noise=shared_noise)
            if not np.all(np.isfinite(canvas)):
                raise FloatingPointError(f"non-finite values in canvas at t={t}")
            if callback is not None:
                callback(t_next, canvas)
    finally:
        if pool is not None:
            pool.shutdown()
    return canvas
