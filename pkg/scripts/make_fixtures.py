"""Write a study-sized synthetic market (72 outlets, 241 zones) and 280 trips.

Usage: python3 scripts/make_fixtures.py [--out DIR]
"""
import argparse
from pathlib import Path

from onway import io
from onway.choice import table1_coefficients
from onway.synth import generate_synthetic, synthetic_market


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/fixtures")
    ap.add_argument("--seed", type=int, default=9)
    args = ap.parse_args()
    out = Path(args.out)
    market = synthetic_market(72, 241, extent_km=20.0, seed=args.seed)
    trips = generate_synthetic(table1_coefficients("latent2"), market, 280, seed=args.seed + 1)
    print(io.save_market(market, out / "market"))
    print(io.save_trips(trips, out / "trips.tsv"))


if __name__ == "__main__":
    main()
