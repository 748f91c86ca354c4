"""Single-patch DDPM/DDIM chains with exact denoisers against their priors."""

import argparse

import numpy as np
from _common import save
from scipy import stats

from jointdiffusion.denoiser import GmmPrior, GpPrior
from jointdiffusion.metrics import ks_critical_value, ks_statistic_columns
from jointdiffusion.sampler import SamplerKind, sample_single
from jointdiffusion.schedule import default_schedule


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("-T", type=int, default=100)
    parser.add_argument("--runs", type=int, default=5000)
    parser.add_argument("--gp-runs", type=int, default=2000)
    parser.add_argument("--out")
    args = parser.parse_args()

    schedule = default_schedule(args.T)
    crit = ks_critical_value(args.runs, 0.01)
    doc = {"T": args.T, "ks_critical": crit}
    for kind in (SamplerKind("ddpm", "beta"), SamplerKind("ddpm", "tilde"), SamplerKind("ddim", steps=50)):
        name = kind.type.value + ("" if not kind.stochastic else f"-{kind.sigma_variant.value}")
        x = sample_single(GmmPrior((1.0,), (1.0,), (0.5,)), kind, schedule, (8, 8), seed=1, batch=args.runs)
        d = ks_statistic_columns(x, lambda v: stats.norm.cdf(v, 1.0, 0.5))
        gp = GpPrior.squared_exponential((16, 16), 8.0)
        y = sample_single(gp, kind, schedule, (16, 16), seed=2, batch=args.gp_runs)
        c = gp.covariance()
        rel = np.linalg.norm(np.cov(y.reshape(args.gp_runs, -1), rowvar=False) - c) / np.linalg.norm(c)
        doc[name] = {"ks_pass_fraction": float(np.mean(d < crit)), "gmm_var": float(x.var()),
                     "gp_rel_frobenius": float(rel)}
        print(f"{name:>10}: KS pass {np.mean(d < crit):.1%}, var {x.var():.4f} (0.25), "
              f"GP covariance error {rel:.3f}")
    save(args.out, doc)


if __name__ == "__main__":
    main()
