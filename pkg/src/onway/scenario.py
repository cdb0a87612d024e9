"""Grid-city duopoly: target-station probability fields and location equilibria.

One route runs from ``origin`` to ``destination``; a competitor sits at a
fixed node and a target station is placed at every candidate node. Choice
sets always hold exactly the two stations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .choice import CoefficientSet, context_matrix, log_conditional, log_strategy_probabilities, table1_coefficients
from .errors import InvalidSpec, NoConvergence

AWARENESS_MODES = ("at_origin", "uniform")


@dataclass(frozen=True)
class ScenarioSpec:
    """Configuration of one grid-city scenario.

    Coordinates are grid units; ``unit_km`` converts them to km. Awareness
    ``"at_origin"`` evaluates every consumer at the origin with
    ``aware_before = 1``; ``"uniform"`` averages over ``n_points`` positions
    evenly spaced on the route (destination excluded) with ``aware_before = 0``.
    ``destination_share`` pins the destination-strategy probability instead
    of deriving it from the trip context.
    """

    grid: tuple = (100, 100)
    origin: tuple = (20.0, 50.0)
    destination: tuple = (80.0, 50.0)
    competitor: tuple = (50.0, 50.0)
    unit_km: float = 0.1
    awareness: str = "at_origin"
    n_points: int = 60
    regular: bool = True
    morning: bool = True
    base_quality: float = 80.0
    target_quality: float | None = None
    center: tuple | None = None
    center_opportunities: float = 1.27
    coeffs: CoefficientSet = field(default_factory=lambda: table1_coefficients("latent2"))
    t_star: float = 13.22
    speed: float = 0.24
    comp_radius: float = 0.5
    destination_share: float | None = None

    def __post_init__(self):
        w, h = self.grid
        if int(w) != w or int(h) != h or w < 1 or h < 1:
            raise InvalidSpec(f"grid must be positive integers, got {self.grid}")
        if tuple(map(float, self.origin)) == tuple(map(float, self.destination)):
            raise InvalidSpec("origin and destination coincide")
        cx, cy = self.competitor
        if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
            raise InvalidSpec(f"competitor {self.competitor} lies off the grid")
        if self.awareness not in AWARENESS_MODES:
            raise InvalidSpec(f"awareness must be one of {AWARENESS_MODES}, got {self.awareness!r}")
        if self.n_points < 1:
            raise InvalidSpec("n_points must be >= 1")
        for name in ("unit_km", "t_star", "speed", "comp_radius"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be > 0")
        if self.center_opportunities < 0:
            raise InvalidSpec("center_opportunities must be >= 0")
        if self.coeffs.sigmas is not None:
            raise InvalidSpec("scenarios need latent-strategy coefficients")
        if self.destination_share is not None:
            if self.coeffs.n_strategies != 2:
                raise InvalidSpec("destination_share needs a two-strategy model")
            if not 0.0 <= self.destination_share <= 1.0:
                raise InvalidSpec("destination_share must lie in [0, 1]")

    @property
    def quality_target(self) -> float:
        return self.base_quality if self.target_quality is None else self.target_quality

    def awareness_points(self) -> np.ndarray:
        o = np.asarray(self.origin, float)
        if self.awareness == "at_origin":
            return o[None, :]
        d = np.asarray(self.destination, float)
        k = np.arange(self.n_points)[:, None] / self.n_points
        return o + k * (d - o)

    def strategy_shares(self) -> np.ndarray:
        """Strategy probabilities shared by every consumer in the scenario."""
        if self.coeffs.n_strategies == 1:
            return np.ones(1)
        if self.destination_share is not None:
            return np.array([1.0 - self.destination_share, self.destination_share])
        aware = self.awareness == "at_origin"
        z = context_matrix([self.regular], [aware], [self.morning])
        return np.exp(log_strategy_probabilities(self.coeffs.alphas, z)[0])


@dataclass(frozen=True, eq=False)
class ProbabilityField:
    """Target and competitor probabilities indexed ``[y, x]``."""

    target: np.ndarray
    competitor: np.ndarray
    argmax: tuple
    max_value: float


def _aggl(spec: ScenarioSpec, xy: np.ndarray) -> np.ndarray:
    if spec.center is None:
        return np.zeros(xy.shape[:-1])
    km = np.linalg.norm(xy - np.asarray(spec.center, float), axis=-1) * spec.unit_km
    return spec.center_opportunities * np.exp(-0.5 * (km / spec.speed / spec.t_star) ** 2)


def target_probability(spec: ScenarioSpec, targets, competitors=None) -> np.ndarray:
    """Target-station choice probability for each (target, competitor) pair.

    ``targets`` is ``(N, 2)`` in grid units; ``competitors`` is ``(N, 2)`` or
    omitted for ``spec.competitor``. Values are averaged over the scenario's
    awareness positions.
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    if competitors is None:
        competitors = np.broadcast_to(np.asarray(spec.competitor, float), targets.shape)
    competitors = np.atleast_2d(np.asarray(competitors, float))
    stations = np.stack([targets, competitors], axis=1)  # (N, 2, 2)
    u = spec.unit_km
    dest = np.asarray(spec.destination, float)

    X = np.zeros(stations.shape[:2] + (5,))
    gap = np.linalg.norm(targets - competitors, axis=-1) * u
    X[:, :, 2] = (gap <= spec.comp_radius)[:, None]
    X[:, :, 3] = _aggl(spec, stations)
    X[:, 0, 4] = spec.quality_target
    X[:, 1, 4] = spec.base_quality
    to_dest = np.linalg.norm(stations - dest, axis=-1) * u

    q = spec.strategy_shares()
    total = np.zeros(len(targets))
    for p in spec.awareness_points():
        remaining = np.linalg.norm(dest - p) * u
        direct = np.linalg.norm(stations - p, axis=-1) * u
        X[:, :, 0] = (direct + to_dest - remaining) / remaining
        X[:, :, 1] = direct
        total += q @ np.exp(log_conditional(spec.coeffs.betas, X)[:, :, 0])
    return total / len(spec.awareness_points())


def probability_field(spec: ScenarioSpec) -> ProbabilityField:
    w, h = (int(v) for v in spec.grid)
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    cells = np.column_stack([xs.ravel(), ys.ravel()])
    target = target_probability(spec, cells).reshape(h, w)
    iy, ix = np.unravel_index(int(np.argmax(target)), target.shape)
    return ProbabilityField(target, 1.0 - target, (int(ix), int(iy)), float(target[iy, ix]))


@dataclass(frozen=True)
class EquilibriumResult:
    """Outcome of best-response location dynamics on the route line.

    ``kind`` is ``"fixed_point"`` when alternating best responses settle, or
    ``"epsilon"`` when they cycle; the reported location is then the
    co-location from which a unilateral move gains least, and ``epsilon``
    is that gain.
    """

    x_target: int
    x_competitor: int
    shares: tuple
    kind: str
    epsilon: float
    tie: bool
    cycle: tuple
    rounds: int


def _line_payoffs(spec: ScenarioSpec) -> np.ndarray:
    # M[a, b] = target share with target at x=a, competitor at x=b
    w = int(spec.grid[0])
    y = float(spec.origin[1])
    a, b = np.meshgrid(np.arange(w, dtype=float), np.arange(w, dtype=float), indexing="ij")
    t = np.column_stack([a.ravel(), np.full(a.size, y)])
    c = np.column_stack([b.ravel(), np.full(b.size, y)])
    return target_probability(spec, t, c).reshape(w, w)


def _best_response(payoff: np.ndarray, current: int, atol: float) -> int:
    best = payoff.max()
    if payoff[current] >= best - atol:
        return current
    return int(np.argmax(payoff))


def equilibrium_search(
    spec: ScenarioSpec,
    *,
    start: tuple | None = None,
    max_rounds: int = 200,
    atol: float = 1e-12,
) -> EquilibriumResult:
    """Alternate best responses of the two stations along the route line.

    Both stations move on integer x with y fixed at the route. The target
    moves first each round; a station stays put when its current location
    is already a best response.
    """
    if spec.origin[1] != spec.destination[1]:
        raise InvalidSpec("equilibrium search needs a horizontal route")
    M = _line_payoffs(spec)
    w = M.shape[0]
    xa, xb = start if start is not None else (int(spec.competitor[0]), int(spec.competitor[0]))
    if not (0 <= xa < w and 0 <= xb < w):
        raise InvalidSpec(f"start {start} lies off the grid")

    if np.ptp(M) <= atol:
        return EquilibriumResult(xa, xb, (float(M[xa, xb]), 1.0 - float(M[xa, xb])), "fixed_point", 0.0, True, (), 0)

    seen = {(xa, xb): 0}
    path = [(xa, xb)]
    for rnd in range(1, max_rounds + 1):
        xa = _best_response(M[:, xb], xa, atol)
        xb = _best_response(1.0 - M[xa, :], xb, atol)
        state = (xa, xb)
        if state == path[-1]:
            return EquilibriumResult(
                xa, xb, (float(M[xa, xb]), 1.0 - float(M[xa, xb])), "fixed_point", 0.0, False, (), rnd
            )
        if state in seen:
            cycle = tuple(path[seen[state]:])
            # gain from the best unilateral move away from each co-location
            diag = np.diag(M)
            gain_a = M.max(axis=0) - diag
            gain_b = (1.0 - M).max(axis=1) - (1.0 - diag)
            eps = np.maximum(gain_a, gain_b)
            c = int(np.argmin(eps))
            return EquilibriumResult(
                c, c, (float(M[c, c]), 1.0 - float(M[c, c])), "epsilon", float(eps[c]), False, cycle, rnd
            )
        seen[state] = rnd
        path.append(state)
    raise NoConvergence(f"no fixed point or cycle within {max_rounds} rounds", visited=path)

