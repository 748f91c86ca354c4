"""Single-step overlap variance for N = 1..4 stacked patches and every fusion rule."""

import argparse

import numpy as np
from _common import save

from jointdiffusion.experiments import single_step_variance
from jointdiffusion.fusion import ALL_CONFIGS
from jointdiffusion.sampler import SamplerKind
from jointdiffusion.schedule import default_schedule


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100_000)
    parser.add_argument("--t", type=int, default=50)
    parser.add_argument("-T", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out")
    args = parser.parse_args()

    schedule = default_schedule(args.T)
    kind = SamplerKind("ddpm", "beta")
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'N':>2} {'fusion':>7} {'measured':>12} {'expected':>12} {'ratio':>7}")
    for n in (1, 2, 3, 4):
        w = rng.uniform(0.1, 1.0, n)
        for cfg in ALL_CONFIGS:
            r = single_step_variance(n, cfg, trials=args.trials, t=args.t, schedule=schedule,
                                     kind=kind, weights=w, seed=args.seed + n)
            rows.append({**r.to_dict(), "weights": w.tolist()})
            print(f"{n:>2} {r.label:>7} {r.measured:12.6f} {r.expected:12.6f} {r.ratio:7.4f}")
    save(args.out, {"t": args.t, "T": args.T, "rows": rows})


if __name__ == "__main__":
    main()
