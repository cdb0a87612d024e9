"""Trip records and their assembly into feature arrays."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .choice import context_matrix
from .errors import DanglingReference, DegenerateTrip, DataWarning
from .spatial import Market, MetricDistance, Point, point_of_awareness


@dataclass(frozen=True)
class Observation:
    """One intercepted trip.

    ``origin`` and ``destination`` are zone ids; ``chosen`` is an outlet id.
    ``awareness_point`` is the exact point of awareness when known
    (synthetic data); otherwise it is back-projected from ``minutes_aware``.
    """

    id: str
    origin: str
    destination: str
    chosen: str
    aware_before: bool
    minutes_aware: float = 0.0
    regular: bool = False
    morning: bool = False
    awareness_point: Point | None = None
    covariates: dict = field(default_factory=dict, compare=False)

    def with_morning(self, morning: bool) -> "Observation":
        return Observation(
            self.id, self.origin, self.destination, self.chosen, self.aware_before,
            self.minutes_aware, self.regular, morning, self.awareness_point, self.covariates,
        )


@dataclass(eq=False)
class Design:
    """Feature tensor ``X`` of shape ``(n, J, 5)`` plus choices and strategy covariates."""

    X: np.ndarray
    chosen: np.ndarray
    Z: np.ndarray
    ids: list
    available: np.ndarray | None = None

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Design":
        idx = np.asarray(idx)
        return Design(
            self.X[idx], self.chosen[idx], self.Z[idx], [self.ids[i] for i in idx],
            None if self.available is None else self.available[idx],
        )

    def with_context(self, Z) -> "Design":
        return Design(self.X, self.chosen, np.asarray(Z, float), self.ids, self.available)


def awareness_position(obs: Observation, market: Market) -> Point:
    origin = market.zone(obs.origin).centroid
    if obs.aware_before:
        return origin
    if obs.awareness_point is not None:
        return market.resolve_position(obs.awareness_point)
    chosen = market.outlet(obs.chosen).location
    if market.distances.is_matrix:
        # back-project along straight coordinates, then snap to a named zone
        pt = point_of_awareness(origin, chosen, False, obs.minutes_aware, MetricDistance(), market.speed)
        return market.resolve_position(pt)
    return point_of_awareness(origin, chosen, False, obs.minutes_aware, market.distances, market.speed)


def _rowwise(d, a_pts, b_pts):
    # distances a[i] -> b[i]
    if d.is_matrix:
        rows = d._rows(a_pts)
        cols = d._rows(b_pts)
        return d.matrix[rows, cols]
    a = np.array([p.as_tuple() for p in a_pts]).reshape(-1, 2)
    b = np.array([p.as_tuple() for p in b_pts]).reshape(-1, 2)
    diff = a - b
    if d.metric == "euclidean":
        out = np.sqrt((diff**2).sum(axis=1))
    else:
        out = np.abs(diff).sum(axis=1)
    return d.scale * out


def build_design(
    dataset,
    market: Market,
    *,
    from_origin: bool = False,
    max_direct_km: float | None = None,
) -> Design:
    """Assemble features for every observation against every market outlet.

    ``from_origin`` places every consumer at the trip origin and zeroes the
    detour column (gravity-type models).
    """
    dataset = list(dataset)
    n, J = len(dataset), len(market.outlets)
    d = market.distances
    chosen = np.empty(n, dtype=int)
    positions, dests = [], []
    for i, obs in enumerate(dataset):
        if obs.chosen not in market.outlet_index:
            raise DanglingReference(f"trip {obs.id}: unknown outlet {obs.chosen!r}", obs.chosen)
        chosen[i] = market.outlet_index[obs.chosen]
        dests.append(market.zone(obs.destination).centroid)
        positions.append(market.zone(obs.origin).centroid if from_origin else awareness_position(obs, market))

    X = np.zeros((n, J, 5))
    outlets = [o.location for o in market.outlets]
    if n:
        direct = d.pairwise(positions, outlets)
        X[:, :, 1] = direct
        if not from_origin:
            remaining = _rowwise(d, positions, dests)
            bad = np.flatnonzero(remaining <= 0)
            if bad.size:
                raise DegenerateTrip(trip_id=dataset[bad[0]].id)
            to_dest = d.pairwise(outlets, dests).T
            detour = (direct + to_dest - remaining[:, None]) / remaining[:, None]
            neg = detour < -1e-12
            if neg.any():
                warnings.warn(
                    f"{int(neg.sum())} negative detour values (distance data violates the "
                    "triangle inequality)",
                    DataWarning,
                    stacklevel=2,
                )
            X[:, :, 0] = detour
    X[:, :, 2] = market.competition
    X[:, :, 3] = market.agglomeration
    X[:, :, 4] = market.quality

    Z = context_matrix(
        [o.regular for o in dataset], [o.aware_before for o in dataset], [o.morning for o in dataset]
    ).reshape(n, 5)
    available = None
    if max_direct_km is not None:
        available = X[:, :, 1] <= max_direct_km
        available[np.arange(n), chosen] = True
    return Design(X, chosen, Z, [o.id for o in dataset], available)
