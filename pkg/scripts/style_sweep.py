"""Mean pairwise cosine of the seven desk-panorama crops across the alpha grid."""

import argparse

import numpy as np
from _common import save

from jointdiffusion.experiments import style_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out")
    args = parser.parse_args()

    res = style_sweep((64, 448), (64, 64), args.trials, seed=args.seed)
    spread = res.cosines.std(axis=0)
    for a, m, s in zip(res.alphas, res.mean_curve, spread):
        print(f"alpha {a:.1f}: mean cosine {m:.4f} (sd {s:.4f})")
    up = np.mean(np.all(np.diff(res.cosines, axis=1) > 0, axis=1))
    print(f"strictly increasing over the whole grid in {up:.0%} of trials")
    save(args.out, res.to_dict())


if __name__ == "__main__":
    main()
