"""Compute the five grid-city scenarios and the route-line equilibrium.

Usage: python3 scripts/figure3_scenarios.py [--out DIR]
"""
import argparse
from pathlib import Path

from onway import io
from onway.scenario import ScenarioSpec, equilibrium_search, probability_field

CENTER = (50.0, 75.0)
SCENARIOS = {
    "s1_at_origin": ScenarioSpec(),
    "s2_uniform": ScenarioSpec(awareness="uniform"),
    "s3_center_at_origin": ScenarioSpec(center=CENTER),
    "s4_center_uniform": ScenarioSpec(awareness="uniform", center=CENTER),
    "s5_quality": ScenarioSpec(target_quality=88.0),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/figure3")
    args = ap.parse_args()
    out = Path(args.out)
    rows = []
    for name, spec in SCENARIOS.items():
        f = probability_field(spec)
        io.write_field(f.target, out / f"{name}.tsv")
        rows.append((name, f.argmax[0], f.argmax[1], f.max_value))
        print(f"{name:22s} argmax {f.argmax}  p = {f.max_value:.4f}")
    io.write_table(out / "summary.tsv", ("scenario", "argmax_x", "argmax_y", "max_value"), rows)
    eq = equilibrium_search(SCENARIOS["s2_uniform"])
    print(f"equilibrium x = ({eq.x_target}, {eq.x_competitor}) kind={eq.kind} epsilon={eq.epsilon:.4f}")
    print(f"best-response cycle: {eq.cycle}")


if __name__ == "__main__":
    main()
