"""Command-line entry point: sample, panorama, variance-test, seam-test, style-sweep.

Configuration comes from an optional JSON file whose fields the flags override.
Every cross-field constraint is checked before any sampling starts. Exit codes
are 0 on success, 2 on a configuration error and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from jointdiffusion.denoiser import Denoiser, GmmPrior, GpPrior, zero_eps
from jointdiffusion.experiments import (
    STYLE_ALPHAS,
    chain_variance,
    seam_experiment,
    single_step_variance,
    style_sweep,
)
from jointdiffusion.fusion import ALL_CONFIGS, FusionConfig, Strategy, VarianceMode
from jointdiffusion.grid import RngStream
from jointdiffusion.metrics import MetricReport
from jointdiffusion.pgm import write_pgm
from jointdiffusion.sampler import SamplerKind, sample_joint
from jointdiffusion.schedule import NoiseSchedule, default_schedule, linear_schedule
from jointdiffusion.style import StyleAlignConfig, tile_regions
from jointdiffusion.tiling import LayoutError, TileLayout, make_guidance_map, make_layout

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DEFAULT_TRIALS = {"variance-test": 100_000, "style-sweep": 100}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    T: int = 100
    beta_start: float | None = None
    beta_end: float | None = None
    sampler: str = "ddpm"
    steps: int = 50
    sigma: str = "beta"
    prior: str = "gp"
    length_scale: float = 8.0
    gmm_weights: list[float] = field(default_factory=lambda: [1.0])
    gmm_means: list[float] = field(default_factory=lambda: [1.0])
    gmm_stds: list[float] = field(default_factory=lambda: [0.5])
    canvas: list[int] = field(default_factory=lambda: [64, 448])
    window: list[int] = field(default_factory=lambda: [64, 64])
    stride: list[int] = field(default_factory=lambda: [48, 48])
    guidance_floor: float = 1e-4
    fusion: str = "md"
    vcf: bool = False
    shared_noise: bool = False
    sa_alpha: float = 0.0
    sa_ref_seed: int | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    batch: int | None = None
    trials: int | None = None
    workers: int = 1
    output: str = "runs/latest"

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(key, "unknown config field")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class Run:
    """Engine objects built from a validated RunConfig."""

    config: RunConfig
    schedule: NoiseSchedule
    kind: SamplerKind
    denoiser: Denoiser
    layout: TileLayout
    guidance: np.ndarray
    fusion: FusionConfig
    warnings: list[str] = field(default_factory=list)

    def style(self, seed: int) -> StyleAlignConfig | None:
        cfg = self.config
        if cfg.sa_alpha == 0:
            return None
        ref = seed if cfg.sa_ref_seed is None else cfg.sa_ref_seed
        return StyleAlignConfig.from_seed(cfg.sa_alpha, self.layout.window, ref)

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)


def _pair(value, name: str, allow_scalar: bool) -> tuple[int, int]:
    if allow_scalar and isinstance(value, (list, tuple)) and len(value) == 1:
        value = value[0]
    if allow_scalar and isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        value = [value, value]
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in value)):
        raise ConfigError(name, f"expected two integers (height, width), got {value!r}")
    if min(value) < 1:
        raise ConfigError(name, f"dimensions must be positive, got {list(value)}")
    return int(value[0]), int(value[1])


def _choice(value, name: str, options: Sequence[str]) -> str:
    if value not in options:
        raise ConfigError(name, f"must be one of {', '.join(options)}, got {value!r}")
    return value


def _schedule(cfg: RunConfig) -> NoiseSchedule:
    if not isinstance(cfg.T, int) or cfg.T < 1:
        raise ConfigError("T", f"must be a positive integer, got {cfg.T!r}")
    if (cfg.beta_start is None) != (cfg.beta_end is None):
        raise ConfigError("beta_start", "set both beta_start and beta_end or neither")
    try:
        if cfg.beta_start is None:
            return default_schedule(cfg.T)
        return linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    except ValueError as exc:
        raise ConfigError("beta_start" if cfg.beta_start is not None else "T", str(exc)) from exc


def _denoiser(cfg: RunConfig, window: tuple[int, int]) -> Denoiser:
    kind = _choice(cfg.prior, "prior", ("gp", "gmm", "zero"))
    if kind == "zero":
        return zero_eps
    if kind == "gp":
        if not cfg.length_scale > 0:
            raise ConfigError("length_scale", f"must be positive, got {cfg.length_scale}")
        return GpPrior.squared_exponential(window, cfg.length_scale)
    try:
        return GmmPrior(tuple(cfg.gmm_weights), tuple(cfg.gmm_means), tuple(cfg.gmm_stds))
    except (ValueError, TypeError) as exc:
        raise ConfigError("gmm_weights", str(exc)) from exc


def build_run(cfg: RunConfig) -> Run:
    """Validate every field and construct the engine objects, or raise ConfigError."""
    schedule = _schedule(cfg)
    sampler = _choice(cfg.sampler, "sampler", ("ddpm", "ddim"))
    variant = _choice(cfg.sigma, "sigma", ("beta", "tilde"))
    if not isinstance(cfg.steps, int) or not 1 <= cfg.steps <= schedule.T:
        raise ConfigError("steps", f"must be in [1, T={schedule.T}], got {cfg.steps!r}")
    kind = SamplerKind(sampler, variant, cfg.steps)

    canvas = _pair(cfg.canvas, "canvas", allow_scalar=False)
    window = _pair(cfg.window, "window", allow_scalar=True)
    stride = _pair(cfg.stride, "stride", allow_scalar=True)
    try:
        layout = make_layout(canvas, window, stride)
    except LayoutError as exc:
        msg = str(exc)
        name = "window" if msg.startswith("window") else "stride" if msg.startswith("stride") else "canvas"
        raise ConfigError(name, msg) from exc
    if not 0 < cfg.guidance_floor < 1:
        raise ConfigError("guidance_floor", f"must be in (0, 1), got {cfg.guidance_floor}")
    guidance = make_guidance_map(window, cfg.guidance_floor)

    strategy = _choice(cfg.fusion, "fusion", ("md", "gf"))
    if not isinstance(cfg.vcf, bool):
        raise ConfigError("vcf", f"must be true or false, got {cfg.vcf!r}")
    fusion = FusionConfig(strategy, "corrected" if cfg.vcf else "plain")
    if not isinstance(cfg.shared_noise, bool):
        raise ConfigError("shared_noise", f"must be true or false, got {cfg.shared_noise!r}")

    if not 0.0 <= cfg.sa_alpha <= 1.0:
        raise ConfigError("sa_alpha", f"must be in [0, 1], got {cfg.sa_alpha}")
    if cfg.sa_alpha > 0:
        try:
            tile_regions(canvas, window)
        except LayoutError as exc:
            raise ConfigError("sa_alpha", f"style alignment needs {exc}") from exc
    if cfg.sa_ref_seed is not None and cfg.sa_ref_seed < 0:
        raise ConfigError("sa_ref_seed", f"must be non-negative, got {cfg.sa_ref_seed}")

    if not cfg.seeds or any(not isinstance(s, int) or s < 0 for s in cfg.seeds):
        raise ConfigError("seeds", f"need one or more non-negative integers, got {cfg.seeds!r}")
    if cfg.batch is not None and cfg.batch < 1:
        raise ConfigError("batch", f"must be positive, got {cfg.batch}")
    if cfg.trials is not None and cfg.trials < 2:
        raise ConfigError("trials", f"must be at least 2, got {cfg.trials}")
    if cfg.workers < 1:
        raise ConfigError("workers", f"must be positive, got {cfg.workers}")

    denoiser = _denoiser(cfg, window)
    run = Run(cfg, schedule, kind, denoiser, layout, guidance, fusion)
    if cfg.vcf and not kind.stochastic:
        run.warn("VCF has no effect with the deterministic DDIM sampler")
    return run


def _region_dict(region) -> dict:
    return {"row0": region.row0, "col0": region.col0, "height": region.height, "width": region.width}


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest(command: str, run: Run, **extra) -> dict:
    return {
        "command": command,
        "config": run.config.to_dict(),
        "patches": [_region_dict(r) for r in run.layout.regions],
        "warnings": list(run.warnings),
        **extra,
    }


def _write_report(out: Path, report: MetricReport) -> None:
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.csv").write_text(report.to_csv())


def cmd_sample(run: Run, out: Path, command: str = "sample") -> int:
    runs = []
    start = time.perf_counter()
    for seed in run.config.seeds:
        steps: list[dict] = []

        def record(t: int, canvas: np.ndarray) -> None:
            steps.append({"t": t, "mean": float(canvas.mean()), "std": float(canvas.std()),
                          "min": float(canvas.min()), "max": float(canvas.max())})

        t0 = time.perf_counter()
        x = sample_joint(run.denoiser, run.kind, run.schedule, run.layout, run.guidance,
                         run.fusion, run.style(seed), seed, workers=run.config.workers,
                         callback=record, shared_noise=run.config.shared_noise)
        image = f"seed_{seed}.pgm"
        mapping = write_pgm(out / image, x)
        np.save(out / f"seed_{seed}.npy", x)
        runs.append({"seed": seed, "image": image, "pgm_mapping": mapping.to_dict(),
                     "seconds": time.perf_counter() - t0, "steps": steps})
    _write_json(out / "manifest.json",
                _manifest(command, run, runs=runs, total_seconds=time.perf_counter() - start))
    return EXIT_OK


def _gf_weights(n: int, seed: int) -> np.ndarray:
    return RngStream(seed, "fusion-weights", n).generator().uniform(0.1, 1.0, n)


def cmd_variance_test(run: Run, out: Path, skip_chain: bool = False) -> int:
    cfg = run.config
    trials = cfg.trials or DEFAULT_TRIALS["variance-test"]
    if not skip_chain and len(cfg.seeds) * (cfg.batch or 1) < 2:
        raise ConfigError("seeds", "the full-chain experiment needs at least 2 ensemble members")
    if trials < 1000:
        run.warn(f"trials M = {trials} is below 1000; variance estimates will be noisy")
    seed = cfg.seeds[0]
    t = run.kind.transitions(run.schedule)[len(run.kind.transitions(run.schedule)) // 2][0]
    report = MetricReport(meta={"command": "variance-test", "t": t, "trials": trials})
    step_results = []
    for n in (1, 2, 3, 4):
        w = _gf_weights(n, seed)
        for fusion in ALL_CONFIGS:
            res = single_step_variance(n, fusion, trials=trials, t=t, schedule=run.schedule,
                                       kind=run.kind, weights=w, seed=seed,
                                       shared_noise=cfg.shared_noise)
            step_results.append({**res.to_dict(), "weights": w.tolist()})
            report.add(f"step.n{n}.{res.label}.measured", res.measured)
            report.add(f"step.n{n}.{res.label}.expected", res.expected)
            report.add(f"step.n{n}.{res.label}.ratio", res.ratio)
    chain_results = []
    if not skip_chain:
        for mode in VarianceMode:
            fusion = FusionConfig(run.fusion.strategy, mode)
            res = chain_variance(run.denoiser, run.kind, run.schedule, run.layout, run.guidance,
                                 fusion, cfg.seeds, cfg.batch, shared_noise=cfg.shared_noise)
            chain_results.append(res.to_dict())
            report.add(f"chain.{res.label}.ratio", res.ratio)
    report.meta["warnings"] = list(run.warnings)
    _write_report(out, report)
    _write_json(out / "manifest.json",
                _manifest("variance-test", run, single_step=step_results, full_chain=chain_results))
    return EXIT_OK


def cmd_seam_test(run: Run, out: Path, all_fusions: bool = False) -> int:
    seeds = run.config.seeds
    if len(seeds) < 2:
        raise ConfigError("seeds", f"seam-test needs at least 2 paired seeds, got {len(seeds)}")
    fusions = list(ALL_CONFIGS) if all_fusions else [FusionConfig(Strategy.MEAN), FusionConfig(Strategy.GUIDED)]
    if all_fusions and not run.kind.stochastic:
        run.warn("VCF has no effect with the deterministic DDIM sampler")
    res = seam_experiment(run.denoiser, run.kind, run.schedule, run.layout, run.guidance,
                          fusions, seeds)
    report = MetricReport(meta={"command": "seam-test", "seeds": list(seeds),
                                "warnings": list(run.warnings)})
    for label in res.labels:
        report.add(f"seam.{label}.mean", res.mean(label))
        for s, e in zip(seeds, res.energies[label]):
            report.add(f"seam.{label}.seed{s}", e)
    report.add("sign_test.GF_vs_MD.wins", res.wins("GF", "MD"))
    report.add("sign_test.GF_vs_MD.p", res.sign_test("GF", "MD"))
    _write_report(out, report)
    _write_json(out / "manifest.json", _manifest("seam-test", run, result=res.to_dict()))
    return EXIT_OK


def cmd_style_sweep(run: Run, out: Path) -> int:
    cfg = run.config
    trials = cfg.trials or DEFAULT_TRIALS["style-sweep"]
    try:
        res = style_sweep(run.layout.canvas, run.layout.window, trials, seed=cfg.seeds[0])
    except LayoutError as exc:
        raise ConfigError("canvas", str(exc)) from exc
    report = MetricReport(meta={"command": "style-sweep", "trials": trials})
    for a, c in zip(STYLE_ALPHAS, res.mean_curve):
        report.add(f"cosine.alpha{a:.1f}", c)
    _write_report(out, report)
    _write_json(out / "manifest.json", _manifest("style-sweep", run, result=res.to_dict()))
    return EXIT_OK


def _shape_arg(text: str) -> list[int]:
    parts = text.lower().replace("x", ",").split(",")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW or N, got {text!r}") from None
    if len(dims) not in (1, 2):
        raise argparse.ArgumentTypeError(f"expected HxW or N, got {text!r}")
    return dims


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of RunConfig fields")
    common.add_argument("--out", dest="output", help="output directory")
    common.add_argument("-T", dest="T", type=int, help="number of diffusion timesteps")
    common.add_argument("--sampler", choices=("ddpm", "ddim"))
    common.add_argument("--steps", type=int, help="DDIM step count")
    common.add_argument("--sigma", choices=("beta", "tilde"))
    common.add_argument("--prior", choices=("gp", "gmm", "zero"))
    common.add_argument("--length-scale", dest="length_scale", type=float)
    common.add_argument("--fusion", choices=("md", "gf"))
    common.add_argument("--vcf", action="store_const", const=True)
    common.add_argument("--shared-noise", dest="shared_noise", action="store_const", const=True,
                        help="crop each step's noise from one canvas-wide draw")
    common.add_argument("--window", type=_shape_arg)
    common.add_argument("--stride", type=_shape_arg)
    common.add_argument("--canvas", type=_shape_arg)
    common.add_argument("--seed", dest="seeds", type=int, nargs="+")
    common.add_argument("--batch", type=int, help="ensemble members drawn per seed")
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--sa-alpha", dest="sa_alpha", type=float)
    common.add_argument("--sa-ref-seed", dest="sa_ref_seed", type=int)

    parser = argparse.ArgumentParser(prog="jointdiffusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="generate canvases, one PGM per seed")
    sub.add_parser("panorama", parents=[common], help="sample with an explicit layout")
    var = sub.add_parser("variance-test", parents=[common], help="overlap variance experiments")
    var.add_argument("--skip-chain", action="store_true", help="only run the single-step experiment")
    seam = sub.add_parser("seam-test", parents=[common], help="paired seam energy, MD vs GF")
    seam.add_argument("--all-fusions", action="store_true", help="include the VCF variants")
    sub.add_parser("style-sweep", parents=[common], help="style alignment alpha sweep")
    return parser


_FLAG_FIELDS = [f.name for f in dataclasses.fields(RunConfig)]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.command == "panorama" and "canvas" not in data:
        raise ConfigError("canvas", "panorama requires an explicit canvas (--canvas or config file)")
    return RunConfig.from_mapping(data)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        run = build_run(resolve_config(args))
        out = Path(run.config.output)
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("sample", "panorama"):
            return cmd_sample(run, out, args.command)
        if args.command == "variance-test":
            return cmd_variance_test(run, out, args.skip_chain)
        if args.command == "seam-test":
            return cmd_seam_test(run, out, args.all_fusions)
        return cmd_style_sweep(run, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
