"""Synthetic markets and trip tables drawn from the latent-strategy model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .choice import CoefficientSet, log_conditional, log_strategy_probabilities
from .design import Observation, build_design
from .spatial import Market, MetricDistance, Outlet, Point, Zone


def canonical_float(x: float) -> float:
    """Round to the 6 significant digits used by every file writer."""
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class Mix:
    """Shares of regular, aware-before and morning trips."""

    p_regular: float = 0.84
    p_aware: float = 0.707
    p_morning: float = 0.5


def synthetic_market(
    n_outlets: int = 20,
    n_zones: int = 64,
    extent_km: float = 12.0,
    seed: int = 0,
    *,
    cluster_size: int = 4,
    cluster_sd_km: float = 0.35,
    mean_aggl: float = 1.12,
    comp_radius: float = 0.5,
    t_star: float = 13.22,
    speed: float = 0.24,
) -> Market:
    """A square city with clustered outlets and a jittered zone grid.

    Qualities follow the market-wide descriptives (mean 86.24, sd 4.21,
    range 80-93.36); zone opportunities are rescaled so the mean
    agglomeration index equals ``mean_aggl``.
    """
    rng = np.random.default_rng(seed)
    side = math.ceil(math.sqrt(n_zones))
    cell = extent_km / side
    gx, gy = np.meshgrid(np.arange(side), np.arange(side))
    centers = (np.column_stack([gx.ravel(), gy.ravel()])[:n_zones] + 0.5) * cell
    centers += rng.uniform(-0.25, 0.25, size=centers.shape) * cell
    raw_opp = rng.gamma(2.0, 1.0, size=n_zones)

    n_clusters = max(1, -(-n_outlets // cluster_size))
    hubs = rng.uniform(0.1, 0.9, size=(n_clusters, 2)) * extent_km
    which = np.arange(n_outlets) % n_clusters
    locs = hubs[which] + rng.normal(0.0, cluster_sd_km, size=(n_outlets, 2))
    locs = np.clip(locs, 0.0, extent_km)
    quality = np.clip(rng.normal(86.24, 4.21, size=n_outlets), 80.0, 93.36)

    width = len(str(max(n_outlets, n_zones)))
    outlets = [
        Outlet(f"S{i + 1:0{width}d}", Point(canonical_float(x), canonical_float(y)), canonical_float(q))
        for i, ((x, y), q) in enumerate(zip(np.round(locs, 3), np.round(quality, 2)))
    ]
    zone_pts = [Point(canonical_float(x), canonical_float(y)) for x, y in np.round(centers, 3)]

    def build(opp):
        zones = [Zone(f"Z{i + 1:0{width}d}", p, canonical_float(o)) for i, (p, o) in enumerate(zip(zone_pts, opp))]
        return Market(outlets, zones, MetricDistance(), comp_radius, t_star, speed)

    probe = build(raw_opp)
    factor = mean_aggl / probe.agglomeration.mean()
    return build(raw_opp * factor)


def choice_probability_matrix(coeffs: CoefficientSet, design, rng=None) -> np.ndarray:
    """Mixture choice probabilities for every row of ``design``, shape ``(n, J)``.

    With random coefficients (``coeffs.sigmas``) each row gets one draw of
    its own taste vector from ``rng``.
    """
    if coeffs.sigmas is not None:
        rng = rng or np.random.default_rng(0)
        beta = coeffs.betas[0] + coeffs.sigmas * rng.standard_normal((design.n_obs, coeffs.betas.shape[1]))
        v = np.einsum("njk,nk->nj", design.X, beta)
        v -= v.max(axis=1, keepdims=True)
        p = np.exp(v)
        return p / p.sum(axis=1, keepdims=True)
    logp = log_conditional(coeffs.betas, design.X)
    if coeffs.n_strategies == 1:
        return np.exp(logp[0])
    q = np.exp(log_strategy_probabilities(coeffs.alphas, design.Z))
    return np.einsum("ns,snj->nj", q, np.exp(logp))


def generate_synthetic(
    coeffs: CoefficientSet,
    market: Market,
    n: int,
    mix: Mix = Mix(),
    seed: int = 0,
    *,
    from_origin: bool = False,
) -> list[Observation]:
    """Draw ``n`` trips and outlet choices from the model.

    Origin and destination zones are uniform over ordered pairs with O != D.
    Aware-during trips get an awareness point uniform on the O-D segment;
    the point is stored on the observation so features rebuild exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    nz = len(market.zones)
    if nz < 2:
        raise ValueError("need at least two zones to draw trips")
    o_idx = rng.integers(0, nz, size=n)
    d_idx = (o_idx + rng.integers(1, nz, size=n)) % nz
    regular = rng.random(n) < mix.p_regular
    aware = rng.random(n) < mix.p_aware
    morning = rng.random(n) < mix.p_morning
    frac = rng.random(n)

    first = market.outlets[0].id
    width = len(str(n))
    obs = []
    for i in range(n):
        o = market.zones[o_idx[i]]
        d = market.zones[d_idx[i]]
        point = None
        if not aware[i]:
            t = frac[i]
            raw = Point(
                canonical_float(o.centroid.x + t * (d.centroid.x - o.centroid.x)),
                canonical_float(o.centroid.y + t * (d.centroid.y - o.centroid.y)),
            )
            point = market.resolve_position(raw)
            if point == d.centroid:
                point = o.centroid
        obs.append(
            Observation(
                f"T{i + 1:0{width}d}", o.id, d.id, first, bool(aware[i]), 0.0,
                bool(regular[i]), bool(morning[i]), point,
            )
        )

    design = build_design(obs, market, from_origin=from_origin)
    probs = choice_probability_matrix(coeffs, design, rng)
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    picks = (rng.random(n)[:, None] > cdf).sum(axis=1)

    out = []
    for i, ob in enumerate(obs):
        chosen = market.outlets[picks[i]]
        minutes = 0.0
        if ob.awareness_point is not None:
            minutes = canonical_float(market.distances(ob.awareness_point, chosen.location) / market.speed)
        out.append(
            Observation(
                ob.id, ob.origin, ob.destination, chosen.id, ob.aware_before, minutes,
                ob.regular, ob.morning, ob.awareness_point,
            )
        )
    return out
