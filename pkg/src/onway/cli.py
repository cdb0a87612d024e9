"""Command-line entry point: ``onway <verb> ...``.

Every verb writes its outputs under ``--out`` and prints only a short
summary plus the written paths. Exit codes: 0 success, 1 invalid input,
2 failed convergence.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import combine_triangles, engagement_table, segment, substitutability_matrix
from .errors import NoConvergence, OnwayError
from .estimation import ModelFamily, fit
from .scenario import equilibrium_search, probability_field
from .synth import Mix, generate_synthetic, synthetic_market

EXIT_OK, EXIT_INVALID, EXIT_NOCONV = 0, 1, 2
COMPARE_FAMILIES = ("latent2", "single", "gravity", "xgravity", "mixed")


class _Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load_data(args, covariates=()):
    market = io.load_market(args.market)
    trips = io.load_trips(args.trips, market, covariates=covariates)
    out = Path(args.out)
    paths = []
    if trips.rejects:
        paths.append(io.write_table(out / "rejects.tsv", ("line", "id", "reason"),
                                    [(str(a), b, c) for a, b, c in trips.rejects]))
    if not trips:
        raise _Failure(EXIT_INVALID, "no valid trips")
    return market, trips, paths


def _fit(name, args, market, trips):
    family = ModelFamily.from_name(name, draws=args.draws, seed=args.seed)
    return fit(family, trips, market, n_starts=args.starts, seed=args.seed)


def cmd_estimate(args):
    market, trips, paths = _load_data(args)
    res = _fit(args.family, args, market, trips)
    out = Path(args.out)
    paths += [io.save_coefficients(res, out / "coefficients.tsv"), io.write_report(res, out / "report.txt")]
    summary = (f"{res.family.name}: n={res.n_obs} loglik={io.fmt(res.loglik)} aic={io.fmt(res.aic)} "
               f"bic={io.fmt(res.bic)} converged={res.converged} rejects={len(trips.rejects)}")
    return summary, paths, EXIT_OK if res.converged else EXIT_NOCONV


def cmd_compare(args):
    market, trips, paths = _load_data(args)
    out = Path(args.out)
    rows, ok = [], True
    for name in args.families.split(","):
        res = _fit(name, args, market, trips)
        ok &= res.converged
        paths.append(io.save_coefficients(res, out / f"coefficients_{res.family.name}.tsv"))
        rows.append((res.family.name, res.loglik, res.k_params, res.aic, res.bic, int(res.converged)))
    paths.append(io.write_table(out / "comparison.tsv", ("family", "loglik", "k", "aic", "bic", "converged"), rows))
    best = min(rows, key=lambda r: r[3])[0]
    return f"{len(rows)} families fitted; best by AIC: {best}", paths, EXIT_OK if ok else EXIT_NOCONV


def cmd_elasticities(args):
    market, trips, paths = _load_data(args)
    coeffs = io.load_coefficients(args.coeffs)[0]
    subset = args.outlets.split(",") if args.outlets else None
    out = Path(args.out)
    times = ("morning", "afternoon") if args.time == "both" else (args.time,)
    mats = {}
    for t in times:
        m = substitutability_matrix(coeffs, trips, market, subset, morning=(t == "morning"))
        mats[t] = m
        rows = [[oid] + ["" if np.isnan(v) else io.fmt(v) for v in row] for oid, row in zip(m.outlet_ids, m.values)]
        paths.append(io.write_table(out / f"substitutability_{t}.tsv", ["id"] + list(m.outlet_ids), rows))
    if len(mats) == 2:
        comb = combine_triangles(mats["morning"], mats["afternoon"])
        ids = mats["morning"].outlet_ids
        rows = [[oid] + ["" if np.isnan(v) else io.fmt(v) for v in row] for oid, row in zip(ids, comb)]
        paths.append(io.write_table(out / "substitutability_combined.tsv", ["id"] + list(ids), rows))
    means = ", ".join(f"{t} mean={io.fmt(np.nanmean(m.values))}" for t, m in mats.items())
    return means, paths, EXIT_OK


def cmd_engagement(args):
    coeffs = io.load_coefficients(args.coeffs)[0]
    table = engagement_table(coeffs)
    path = io.write_table(Path(args.out) / "engagement.tsv",
                          ("regular", "aware_before", "morning", "destination_probability"), table.rows)
    lo = min(r[3] for r in table.rows)
    hi = max(r[3] for r in table.rows)
    return f"8 contexts; destination probability {io.fmt(lo)} .. {io.fmt(hi)}", [path], EXIT_OK


def cmd_simulate(args):
    spec = io.load_scenario(args.scenario)
    field = probability_field(spec)
    out = Path(args.out)
    paths = [io.write_field(field.target, out / "field_target.tsv")]
    rows = [("argmax_x", field.argmax[0]), ("argmax_y", field.argmax[1]), ("max_value", field.max_value)]
    summary = f"argmax {field.argmax} value {io.fmt(field.max_value)}"
    if args.equilibrium:
        eq = equilibrium_search(spec)
        rows += [("equilibrium_kind", eq.kind), ("equilibrium_x_target", eq.x_target),
                 ("equilibrium_x_competitor", eq.x_competitor), ("equilibrium_epsilon", eq.epsilon),
                 ("equilibrium_tie", eq.tie)]
        summary += f"; equilibrium x=({eq.x_target}, {eq.x_competitor}) [{eq.kind}]"
    paths.append(io.write_table(out / "summary.tsv", ("key", "value"), rows))
    return summary, paths, EXIT_OK


def cmd_synth(args):
    coeffs = io.load_coefficients(args.coeffs)[0]
    out = Path(args.out)
    if args.market:
        market = io.load_market(args.market)
    else:
        market = synthetic_market(args.outlets, args.zones, seed=args.market_seed)
    mix = Mix(args.p_regular, args.p_aware, args.p_morning)
    trips = generate_synthetic(coeffs, market, args.n, mix, seed=args.seed)
    paths = [io.save_market(market, out / "market"), io.save_trips(trips, out / "trips.tsv")]
    return f"{len(trips)} trips over {len(market.outlets)} outlets", paths, EXIT_OK


def cmd_segment(args):
    market, trips, paths = _load_data(args, covariates=(args.by,))
    if trips and args.by not in trips[0].covariates:
        raise _Failure(EXIT_INVALID, f"trip table has no column {args.by!r}")
    coeffs = io.load_coefficients(args.coeffs)[0]
    res = segment(coeffs, trips, market, args.by, posterior=args.posterior)
    rows = [(str(k), v) for k, v in res.group_means.items()]
    paths.append(io.write_table(Path(args.out) / "segment.tsv", ("group", "mean_destination_probability"), rows))
    paths.append(io.write_table(Path(args.out) / "segment_test.tsv", ("F", "df1", "df2", "p_value"),
                                [(res.F, res.df1, res.df2, res.p_value)]))
    return f"F({res.df1},{res.df2}) = {io.fmt(res.F)}, p = {io.fmt(res.p_value)}", paths, EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onway", description="Latent-strategy on-the-way choice toolkit")
    sub = p.add_subparsers(dest="verb", required=True)

    def data(sp):
        sp.add_argument("--market", required=True, help="market directory")
        sp.add_argument("--trips", required=True, help="trip table")

    def fitting(sp):
        sp.add_argument("--starts", type=int, default=8)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--draws", type=int, default=200)

    def coeffs(sp, default="table1"):
        sp.add_argument("--coeffs", default=default, help="coefficient file, or table1[:family]")

    sp = sub.add_parser("estimate", help="fit one model family")
    sp.add_argument("--family", required=True, choices=("latent2", "latent3", "single", "gravity", "xgravity", "mixed"))
    data(sp)
    fitting(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("compare", help="fit the benchmark family and tabulate fit statistics")
    data(sp)
    fitting(sp)
    sp.add_argument("--families", default=",".join(COMPARE_FAMILIES))
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("elasticities", help="substitutability matrices")
    data(sp)
    coeffs(sp)
    sp.add_argument("--outlets", default="", help="comma-separated outlet ids (default: all)")
    sp.add_argument("--time", choices=("morning", "afternoon", "both"), default="both")
    sp.set_defaults(func=cmd_elasticities)

    sp = sub.add_parser("engagement", help="destination-strategy probability per trip context")
    coeffs(sp)
    sp.set_defaults(func=cmd_engagement)

    sp = sub.add_parser("simulate", help="grid-city probability field")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--equilibrium", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("synth", help="draw a synthetic market and trip table")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    coeffs(sp)
    sp.add_argument("--market", default=None, help="existing market directory (default: synthetic)")
    sp.add_argument("--outlets", type=int, default=20)
    sp.add_argument("--zones", type=int, default=64)
    sp.add_argument("--market-seed", type=int, default=0)
    sp.add_argument("--p-regular", type=float, default=Mix.p_regular)
    sp.add_argument("--p-aware", type=float, default=Mix.p_aware)
    sp.add_argument("--p-morning", type=float, default=Mix.p_morning)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("segment", help="F-test of strategy probability across a covariate")
    data(sp)
    coeffs(sp)
    sp.add_argument("--by", required=True)
    sp.add_argument("--posterior", action="store_true")
    sp.set_defaults(func=cmd_segment)

    for sp in sub.choices.values():
        sp.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary, paths, code = args.func(args)
    except _Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (OnwayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(summary)
    for p in paths:
        print(p)
    return code


if __name__ == "__main__":
    sys.exit(main())
