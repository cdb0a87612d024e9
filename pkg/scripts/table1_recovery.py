"""Fit latent(2) to synthetic trips drawn from the published coefficients.

Usage: python3 scripts/table1_recovery.py [--n 10000] [--seed 3]
"""
import argparse
import time

from onway.choice import table1_coefficients
from onway.estimation import ModelFamily, fit
from onway.synth import generate_synthetic, synthetic_market


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--market-seed", type=int, default=1)
    args = ap.parse_args()

    truth = table1_coefficients("latent2")
    market = synthetic_market(20, 64, seed=args.market_seed)
    trips = generate_synthetic(truth, market, args.n, seed=args.seed)
    fam = ModelFamily.latent(2)
    t0 = time.perf_counter()
    res = fit(fam, trips, market)
    print(f"n={res.n_obs} loglik={res.loglik:.2f} grad={res.grad_norm:.1e} {time.perf_counter() - t0:.1f}s")
    ci = res.confidence_intervals()
    covered = 0
    for name, t, est, (lo, hi) in zip(fam.param_names(), fam.pack(truth), res.estimates, ci):
        hit = lo <= t <= hi
        covered += hit
        print(f"{name:26s} true {t:7.2f}  est {est:8.3f}  [{lo:8.3f}, {hi:8.3f}] {'' if hit else 'MISS'}")
    print(f"coverage {covered}/{len(ci)}")
    for family in ("single", "xgravity", "mixed"):
        r = fit(ModelFamily.from_name(family, draws=100), trips, market, compute_se=False, n_starts=2)
        print(f"{family:9s} loglik={r.loglik:.2f} aic={r.aic:.1f} bic={r.bic:.1f}")
    print(f"latent2   loglik={res.loglik:.2f} aic={res.aic:.1f} bic={res.bic:.1f}")


if __name__ == "__main__":
    main()
