"""Ensemble variance of the final desk panorama in overlap vs single-coverage columns."""

import argparse
import time

from _common import save

from jointdiffusion.denoiser import GpPrior
from jointdiffusion.experiments import chain_variance, desk_panorama
from jointdiffusion.fusion import FusionConfig
from jointdiffusion.sampler import SamplerKind
from jointdiffusion.schedule import default_schedule


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--batch", type=int, default=25, help="members per seed")
    parser.add_argument("-T", type=int, default=100)
    parser.add_argument("--fusion", choices=("md", "gf"), default="md")
    parser.add_argument("--out")
    args = parser.parse_args()

    layout, guidance = desk_panorama()
    prior = GpPrior.squared_exponential((64, 64), 8.0)
    schedule = default_schedule(args.T)
    results = []
    for mode in ("plain", "corrected"):
        start = time.perf_counter()
        r = chain_variance(prior, SamplerKind("ddpm", "beta"), schedule, layout, guidance,
                           FusionConfig(args.fusion, mode), range(args.seeds), args.batch)
        results.append(r.to_dict())
        print(f"{r.label:>7}: ratio {r.ratio:.4f} over {r.members} members "
              f"({time.perf_counter() - start:.0f} s)")
    save(args.out, {"T": args.T, "results": results})


if __name__ == "__main__":
    main()
