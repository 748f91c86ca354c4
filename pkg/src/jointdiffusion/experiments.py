"""Reusable experiments: overlap variance, seam energy, and the style-alignment sweep.

Each function returns plain dataclasses so the CLI, the acceptance suite and the
scripts in ``scripts/`` all share one implementation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from jointdiffusion.denoiser import Denoiser, zero_eps
from jointdiffusion.fusion import FusionConfig, Strategy, VarianceMode, plain_variance_factor
from jointdiffusion.grid import Grid, RngStream, crop, gaussian_grid
from jointdiffusion.metrics import ensemble_moments, seam_energy
from jointdiffusion.sampler import SamplerKind, joint_step, sample_joint
from jointdiffusion.schedule import NoiseSchedule, sigma
from jointdiffusion.style import StyleAlignConfig, apply_style_alignment, pairwise_cosine, tile_regions
from jointdiffusion.tiling import TileLayout, coverage_count, make_guidance_map, make_layout, seam_columns


def stacked_layout(n: int) -> TileLayout:
    """1 x (2n - 1) canvas of n windows of width n at stride 1; column n - 1 sees all n."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return make_layout((1, 2 * n - 1), (1, n), (1, 1))


@dataclass(frozen=True)
class StepVarianceResult:
    label: str
    n: int
    t: int
    trials: int
    measured: float
    expected: float

    @property
    def ratio(self) -> float:
        if self.expected == 0.0:
            # deterministic samplers: zero spread is the exact expectation
            return 1.0 if self.measured == 0.0 else math.inf
        return self.measured / self.expected

    def to_dict(self) -> dict:
        return {**asdict(self), "ratio": self.ratio}


def expected_step_variance(kind: SamplerKind, schedule: NoiseSchedule, t: int,
                           fusion: FusionConfig, weights: Sequence[float],
                           shared_noise: bool = False) -> float:
    """Closed-form variance of the fused cell when every patch shares x_t and mu.

    With independent noise the plain rules shrink the variance by sum(w^2) / W^2
    and the corrected rules restore it. With shared noise the plain rules keep it
    and the corrected rules inflate it by W^2 / sum(w^2).
    """
    if not kind.stochastic:
        return 0.0
    s2 = sigma(schedule, t, kind.sigma_variant) ** 2
    w = np.asarray(weights, dtype=np.float64)
    if fusion.strategy is Strategy.MEAN:
        w = np.ones_like(w)
    factor = plain_variance_factor(w)
    corrected = fusion.variance_mode is VarianceMode.CORRECTED
    if shared_noise:
        return s2 / factor if corrected else s2
    return s2 if corrected else s2 * factor


def single_step_variance(n: int, fusion: FusionConfig, *, trials: int = 100_000,
                         t: int = 50, schedule: NoiseSchedule, kind: SamplerKind,
                         weights: Sequence[float] | None = None, seed: int = 0,
                         denoiser: Denoiser = zero_eps,
                         shared_noise: bool = False) -> StepVarianceResult:
    """One joint step from x_t = 0 on the stacked n-overlap layout.

    ``weights`` is the 1 x n guidance row used by guided fusion (ones if omitted).
    The measured value is the sample variance of the fully overlapped cell over
    ``trials`` independent noise draws.
    """
    layout = stacked_layout(n)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError(f"weights must be {n} positive values")
    t_next = t - 1
    if not kind.stochastic:
        t_next = dict(kind.transitions(schedule)).get(t, t - 1)
    canvas = np.zeros((trials, 1, 2 * n - 1))
    out = joint_step(canvas, t, t_next, denoiser, kind, schedule, layout,
                     w.reshape(1, n), fusion, seed, shared_noise=shared_noise)
    cell = out[:, 0, n - 1]
    measured = float(cell.var(ddof=1)) if trials > 1 else 0.0
    # patch i sees the centre cell at window column n - 1 - i
    expected = expected_step_variance(kind, schedule, t, fusion, w[::-1], shared_noise)
    return StepVarianceResult(fusion.label, n, t, trials, measured, expected)


def ensemble(denoiser: Denoiser, kind: SamplerKind, schedule: NoiseSchedule,
             layout: TileLayout, guidance: Grid, fusion: FusionConfig,
             seeds: Sequence[int], batch: int | None = None,
             sa: StyleAlignConfig | None = None, shared_noise: bool = False) -> np.ndarray:
    """Stack of final canvases, ``batch`` members per seed (one if ``batch`` is None)."""
    parts = []
    for s in seeds:
        x = sample_joint(denoiser, kind, schedule, layout, guidance, fusion, sa, seed=s,
                         batch=batch, shared_noise=shared_noise)
        parts.append(x if batch is not None else x[None])
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class ChainVarianceResult:
    label: str
    members: int
    overlap_var: float
    single_var: float

    @property
    def ratio(self) -> float:
        return self.overlap_var / self.single_var

    def to_dict(self) -> dict:
        return {**asdict(self), "ratio": self.ratio}


def overlap_variance_ratio(samples: np.ndarray, layout: TileLayout) -> tuple[float, float]:
    """Mean ensemble variance in maximally covered cells and in singly covered cells."""
    _, var = ensemble_moments(samples)
    cov = coverage_count(layout)
    top = cov == cov.max()
    single = cov == 1
    if not single.any() or cov.max() == 1:
        raise ValueError("layout needs both overlapped and non-overlapped cells")
    return float(var[top].mean()), float(var[single].mean())


def chain_variance(denoiser: Denoiser, kind: SamplerKind, schedule: NoiseSchedule,
                   layout: TileLayout, guidance: Grid, fusion: FusionConfig,
                   seeds: Sequence[int], batch: int | None = None,
                   shared_noise: bool = False) -> ChainVarianceResult:
    samples = ensemble(denoiser, kind, schedule, layout, guidance, fusion, seeds, batch,
                       shared_noise=shared_noise)
    top, single = overlap_variance_ratio(samples, layout)
    return ChainVarianceResult(fusion.label, samples.shape[0], top, single)


@dataclass
class SeamResult:
    labels: list[str]
    seeds: list[int]
    energies: dict[str, list[float]] = field(default_factory=dict)

    def mean(self, label: str) -> float:
        return float(np.mean(self.energies[label]))

    def wins(self, better: str, worse: str) -> int:
        return int(sum(b < w for b, w in zip(self.energies[better], self.energies[worse])))

    def sign_test(self, better: str, worse: str) -> float:
        """One-sided p-value that ``better`` has lower seam energy more often than chance."""
        n = len(self.seeds)
        return float(stats.binomtest(self.wins(better, worse), n, 0.5, alternative="greater").pvalue)

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "energies": {k: list(v) for k, v in self.energies.items()},
            "means": {k: self.mean(k) for k in self.labels},
        }


def seam_experiment(denoiser: Denoiser, kind: SamplerKind, schedule: NoiseSchedule,
                    layout: TileLayout, guidance: Grid, fusions: Sequence[FusionConfig],
                    seeds: Sequence[int], sa: StyleAlignConfig | None = None) -> SeamResult:
    """Seam energy of each fusion rule on the same seeds (hence the same x_T)."""
    if len(seeds) < 2:
        raise ValueError("seam experiment needs at least 2 paired seeds")
    cols = seam_columns(layout)
    result = SeamResult([f.label for f in fusions], list(seeds))
    for f in fusions:
        result.energies[f.label] = [
            seam_energy(sample_joint(denoiser, kind, schedule, layout, guidance, f, sa, seed=s), cols)
            for s in seeds
        ]
    return result


STYLE_ALPHAS = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass
class StyleSweepResult:
    alphas: list[float]
    cosines: np.ndarray  # (trials, len(alphas))

    @property
    def mean_curve(self) -> np.ndarray:
        return self.cosines.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "mean_cosine": self.mean_curve.tolist(),
            "trials": int(self.cosines.shape[0]),
        }


def style_sweep(canvas: tuple[int, int], window: tuple[int, int], trials: int, seed: int = 0,
                alphas: Sequence[float] = STYLE_ALPHAS) -> StyleSweepResult:
    """Mean pairwise cosine among the non-overlapped initial-noise crops per alpha.

    Trial k draws its canvas noise from seed ``seed + k`` and its reference from the
    same seed's style-reference stream.
    """
    regions = tile_regions(canvas, window)
    if len(regions) < 2:
        raise ValueError("style sweep needs at least two crops")
    cos = np.empty((trials, len(alphas)))
    for k in range(trials):
        noise = gaussian_grid(*canvas, RngStream(seed + k, "init"))
        for j, a in enumerate(alphas):
            cfg = StyleAlignConfig.from_seed(a, window, seed + k)
            aligned = apply_style_alignment(noise, cfg)
            cos[k, j] = pairwise_cosine([crop(aligned, r) for r in regions])
    return StyleSweepResult(list(alphas), cos)


def desk_panorama() -> tuple[TileLayout, Grid]:
    """64 x 448 canvas, 64 x 64 window, stride 48: nine patches."""
    layout = make_layout((64, 448), (64, 64), (48, 48))
    return layout, make_guidance_map((64, 64))
