"""Spatial primitives and feature construction from trip geometry.

Distances come from a pluggable provider: either a built-in metric on
planar km coordinates, or a pairwise matrix over named locations (outlets
and zone centroids).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DanglingReference,
    DataError,
    DegenerateTrip,
    TooFewSites,
    UnknownLocation,
    ZeroVariance,
)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def as_tuple(self):
        return (float(self.x), float(self.y))


@dataclass(frozen=True)
class Outlet:
    id: str
    location: Point
    quality: float

    def __post_init__(self):
        if not math.isfinite(self.quality):
            raise ValueError(f"outlet {self.id}: non-finite quality")


@dataclass(frozen=True)
class Zone:
    id: str
    centroid: Point
    opportunities: float

    def __post_init__(self):
        if not self.opportunities >= 0:
            raise ValueError(f"zone {self.id}: opportunities must be >= 0")


def _xy(points) -> np.ndarray:
    if isinstance(points, Point):
        return np.array([[points.x, points.y]])
    arr = np.asarray(
        [p.as_tuple() if isinstance(p, Point) else p for p in points], dtype=float
    )
    return arr.reshape(-1, 2)


class MetricDistance:
    """Built-in planar metric: ``scale * ||a - b||`` (euclidean or rectilinear)."""

    is_matrix = False

    def __init__(self, metric: str = "euclidean", scale: float = 1.0):
        if metric not in ("euclidean", "rectilinear"):
            raise ValueError(f"unknown metric {metric!r}")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.metric = metric
        self.scale = float(scale)

    def __call__(self, a: Point, b: Point) -> float:
        return float(self.pairwise(_xy(a), _xy(b))[0, 0])

    def pairwise(self, a, b) -> np.ndarray:
        a, b = _xy(a), _xy(b)
        diff = a[:, None, :] - b[None, :, :]
        if self.metric == "euclidean":
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        else:
            d = np.abs(diff).sum(axis=-1)
        return self.scale * d

    def __repr__(self):
        return f"MetricDistance({self.metric!r}, scale={self.scale})"


class MatrixDistance:
    """Pairwise distances over named locations.

    Points are resolved to location ids through their exact coordinates, so
    only points registered at construction (outlet locations, zone
    centroids) can be queried.
    """

    is_matrix = True

    def __init__(self, ids: Sequence[str], matrix, coords: dict[str, Point] | None = None):
        matrix = np.asarray(matrix, dtype=float)
        n = len(ids)
        if matrix.shape != (n, n):
            raise DataError(f"distance matrix shape {matrix.shape} does not match {n} ids")
        self.ids = list(ids)
        self.matrix = matrix
        self._index = {k: i for i, k in enumerate(self.ids)}
        if len(self._index) != n:
            raise DataError("duplicate ids in distance matrix")
        self._by_coord: dict[tuple[float, float], int] = {}
        for key, pt in (coords or {}).items():
            self.register(key, pt)

    def register(self, key: str, point: Point):
        if key not in self._index:
            raise DanglingReference(f"location {key!r} has no row in the distance matrix", key)
        self._by_coord.setdefault(point.as_tuple(), self._index[key])

    @property
    def asymmetry_count(self) -> int:
        iu = np.triu_indices(len(self.ids), 1)
        return int(np.sum(~np.isclose(self.matrix[iu], self.matrix.T[iu], rtol=1e-9, atol=1e-12)))

    def _rows(self, pts) -> np.ndarray:
        if isinstance(pts, (str, Point)):
            pts = [pts]
        out = []
        for p in pts:
            if isinstance(p, str):
                try:
                    out.append(self._index[p])
                except KeyError:
                    raise UnknownLocation(f"no distance row for {p!r}") from None
                continue
            key = p.as_tuple() if isinstance(p, Point) else (float(p[0]), float(p[1]))
            try:
                out.append(self._by_coord[key])
            except KeyError:
                raise UnknownLocation(f"point {key} is not a named location") from None
        return np.asarray(out, dtype=int)

    def __call__(self, a, b) -> float:
        return float(self.matrix[self._rows(a)[0], self._rows(b)[0]])

    def pairwise(self, a, b) -> np.ndarray:
        if isinstance(a, np.ndarray):
            a = [tuple(r) for r in a.reshape(-1, 2)]
        if isinstance(b, np.ndarray):
            b = [tuple(r) for r in b.reshape(-1, 2)]
        return self.matrix[np.ix_(self._rows(a), self._rows(b))]

    def knows(self, point: Point) -> bool:
        return point.as_tuple() in self._by_coord


@dataclass(eq=False)
class Market:
    """Outlets, zones and a distance provider; the universal choice set."""

    outlets: list[Outlet]
    zones: list[Zone] = field(default_factory=list)
    distances: MetricDistance | MatrixDistance = field(default_factory=MetricDistance)
    comp_radius: float = 0.5
    t_star: float = 13.22
    speed: float = 0.24

    def __post_init__(self):
        if not self.comp_radius > 0:
            raise ValueError("comp_radius must be positive")
        if not self.t_star > 0:
            raise ValueError("t_star must be positive")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        ids = [o.id for o in self.outlets]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate outlet ids")
        zids = [z.id for z in self.zones]
        if len(set(zids)) != len(zids):
            raise DataError("duplicate zone ids")
        if self.distances.is_matrix:
            for o in self.outlets:
                self.distances.register(o.id, o.location)
            for z in self.zones:
                self.distances.register(z.id, z.centroid)

    @cached_property
    def outlet_index(self) -> dict[str, int]:
        return {o.id: i for i, o in enumerate(self.outlets)}

    @cached_property
    def zone_index(self) -> dict[str, int]:
        return {z.id: i for i, z in enumerate(self.zones)}

    @cached_property
    def outlet_xy(self) -> np.ndarray:
        return _xy([o.location for o in self.outlets])

    @cached_property
    def zone_xy(self) -> np.ndarray:
        return _xy([z.centroid for z in self.zones]) if self.zones else np.zeros((0, 2))

    @cached_property
    def quality(self) -> np.ndarray:
        return np.array([o.quality for o in self.outlets], dtype=float)

    @cached_property
    def competition(self) -> np.ndarray:
        """COMP per outlet, in outlet order."""
        d = self.distances.pairwise(
            [o.location for o in self.outlets], [o.location for o in self.outlets]
        )
        within = d <= self.comp_radius
        np.fill_diagonal(within, False)
        return within.sum(axis=1).astype(float)

    @cached_property
    def agglomeration(self) -> np.ndarray:
        """AGGL per outlet, in outlet order."""
        if not self.zones:
            return np.zeros(len(self.outlets))
        d = self.distances.pairwise(
            [o.location for o in self.outlets], [z.centroid for z in self.zones]
        )
        opp = np.array([z.opportunities for z in self.zones], dtype=float)
        return _gaussian_accessibility(d / self.speed, opp, self.t_star)

    def outlet(self, outlet_id: str) -> Outlet:
        try:
            return self.outlets[self.outlet_index[outlet_id]]
        except KeyError:
            raise DanglingReference(f"unknown outlet {outlet_id!r}", outlet_id) from None

    def zone(self, zone_id: str) -> Zone:
        try:
            return self.zones[self.zone_index[zone_id]]
        except KeyError:
            raise DanglingReference(f"unknown zone {zone_id!r}", zone_id) from None

    def nearest_zone(self, point: Point) -> Zone:
        if not self.zones:
            raise DataError("market has no zones to snap to")
        d2 = ((self.zone_xy - np.array(point.as_tuple())) ** 2).sum(axis=1)
        return self.zones[int(np.argmin(d2))]

    def resolve_position(self, point: Point) -> Point:
        """Map an arbitrary point onto something the distance provider can use.

        Matrix-backed markets only know named locations, so free points snap
        to the nearest zone centroid.
        """
        if self.distances.is_matrix and not self.distances.knows(point):
            return self.nearest_zone(point).centroid
        return point


def _gaussian_accessibility(minutes, opportunities, t_star):
    w = np.exp(-0.5 * (np.asarray(minutes) / t_star) ** 2)
    return w @ np.asarray(opportunities, dtype=float)


def detour_fraction(position: Point, outlet, destination: Point, d) -> float:
    """Extra distance of the trip via ``outlet``, relative to the direct remainder."""
    loc = outlet.location if isinstance(outlet, Outlet) else outlet
    base = d(position, destination)
    if base <= 0:
        raise DegenerateTrip()
    return (d(position, loc) + d(loc, destination) - base) / base


def point_of_awareness(
    origin: Point,
    chosen: Point,
    aware_before: bool,
    minutes_aware: float,
    d,
    speed: float,
) -> Point:
    """Where the consumer stood when the purchase need arose.

    Aware-before trips start at the origin. Otherwise the point lies
    ``speed * minutes_aware`` km back from the chosen outlet on the straight
    origin-to-outlet segment, clamped at the origin.
    """
    if aware_before:
        return origin
    back = speed * minutes_aware
    length = d(origin, chosen)
    if length <= 0:
        return origin
    t = min(1.0, back / length)
    return Point(chosen.x + t * (origin.x - chosen.x), chosen.y + t * (origin.y - chosen.y))


def local_competition(outlet: Outlet, market: Market) -> int:
    """Number of other outlets within ``comp_radius`` (boundary inclusive)."""
    return int(market.competition[market.outlet_index[outlet.id]])


def agglomeration_index(outlet: Outlet, market: Market) -> float:
    if not market.zones:
        return 0.0
    d = market.distances.pairwise([outlet.location], [z.centroid for z in market.zones])[0]
    opp = [z.opportunities for z in market.zones]
    return float(_gaussian_accessibility(d / market.speed, opp, market.t_star))


class MoranResult(NamedTuple):
    statistic: float
    expected: float
    p_value: float


def spatial_weights(locations, scheme: str = "inverse_distance", d=None) -> np.ndarray:
    """Row-standardized weight matrix with zero diagonal."""
    xy = _xy(locations)
    dist = (d or MetricDistance()).pairwise(xy, xy)
    n = len(xy)
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] <= 0):
        raise DataError("locations must be pairwise distinct")
    w = np.zeros((n, n))
    if scheme == "inverse_distance":
        w[off] = 1.0 / dist[off]
    elif scheme == "inverse_distance_squared":
        w[off] = 1.0 / dist[off] ** 2
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    return w / w.sum(axis=1, keepdims=True)


def _moran_stat(z, w, s0):
    # z: (..., n) centered values
    num = np.einsum("...i,ij,...j->...", z, w, z)
    den = np.einsum("...i,...i->...", z, z)
    return z.shape[-1] / s0 * num / den


def morans_i(
    values,
    locations,
    weights="inverse_distance",
    n_permutations: int = 999,
    seed: int = 0,
) -> MoranResult:
    """Global Moran's I with a two-sided permutation p-value.

    ``weights`` is a scheme name understood by :func:`spatial_weights` or an
    explicit ``(n, n)`` matrix.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        raise TooFewSites(f"need at least 3 sites, got {n}")
    if np.ptp(x) == 0:
        raise ZeroVariance("all values are equal")
    w = spatial_weights(locations, weights) if isinstance(weights, str) else np.asarray(weights, float)
    s0 = w.sum()
    z = x - x.mean()
    stat = float(_moran_stat(z, w, s0))
    expected = -1.0 / (n - 1)
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.broadcast_to(z, (n_permutations, n)), axis=1)
    null = _moran_stat(perms, w, s0)
    extreme = np.sum(np.abs(null - expected) >= abs(stat - expected) - 1e-15)
    return MoranResult(stat, expected, float((extreme + 1) / (n_permutations + 1)))
