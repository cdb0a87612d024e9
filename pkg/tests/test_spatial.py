import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from onway.design import Observation, build_design
from onway.errors import DataWarning, DegenerateTrip, TooFewSites, UnknownLocation, ZeroVariance
from onway.spatial import (
    Market,
    MatrixDistance,
    MetricDistance,
    Outlet,
    Point,
    Zone,
    agglomeration_index,
    detour_fraction,
    local_competition,
    morans_i,
    point_of_awareness,
    spatial_weights,
)

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
points = st.builds(Point, coord, coord)
euclid = MetricDistance()


def moran_oracle(x, xy):
    """Textbook double loop with row-standardized inverse-distance weights."""
    n = len(x)
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                w[i, j] = 1.0 / math.dist(xy[i], xy[j])
        w[i] /= w[i].sum()
    z = np.asarray(x) - np.mean(x)
    num = sum(w[i, j] * z[i] * z[j] for i in range(n) for j in range(n))
    return n / w.sum() * num / (z @ z)


class TestDetourFraction:
    def test_outlet_on_path(self):
        assert detour_fraction(Point(0, 0), Point(4, 0), Point(10, 0), euclid) == 0.0

    def test_off_path_hand_value(self):
        expected = (math.sqrt(50) + math.sqrt(50) - 10) / 10
        got = detour_fraction(Point(0, 0), Point(5, 5), Point(10, 0), euclid)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.41421, abs=1e-5)

    def test_accepts_outlet(self):
        o = Outlet("x", Point(5, 5), 80.0)
        assert detour_fraction(Point(0, 0), o, Point(10, 0), euclid) == pytest.approx(0.414214, abs=1e-6)

    def test_position_at_destination(self):
        with pytest.raises(DegenerateTrip):
            detour_fraction(Point(3, 3), Point(1, 1), Point(3, 3), euclid)

    @given(points, points, points, st.sampled_from(["euclidean", "rectilinear"]))
    def test_nonnegative_for_metrics(self, p, j, d, metric):
        dist = MetricDistance(metric)
        if dist(p, d) < 1e-6:
            return
        assert detour_fraction(p, j, d, dist) >= -1e-9

    @given(points, points, points, st.floats(0.01, 100))
    def test_scale_invariant(self, p, j, d, k):
        if euclid(p, d) < 1e-3:
            return
        a = detour_fraction(p, j, d, euclid)
        b = detour_fraction(p, j, d, MetricDistance(scale=k))
        assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


class TestPointOfAwareness:
    def test_aware_before_is_origin(self):
        assert point_of_awareness(Point(1, 2), Point(8, 0), True, 0.0, euclid, 0.5) == Point(1, 2)

    def test_zero_minutes_is_outlet(self):
        assert point_of_awareness(Point(0, 0), Point(8, 0), False, 0.0, euclid, 0.5) == Point(8, 0)

    def test_back_projection(self):
        p = point_of_awareness(Point(0, 0), Point(8, 0), False, 10.0, euclid, 0.5)
        assert (p.x, p.y) == pytest.approx((3.0, 0.0))

    def test_clamped_at_origin(self):
        p = point_of_awareness(Point(0, 0), Point(8, 0), False, 1000.0, euclid, 0.5)
        assert p == Point(0, 0)

    @given(points, points, st.floats(0, 200), st.floats(0.05, 2))
    def test_on_segment(self, o, j, minutes, speed):
        p = point_of_awareness(o, j, False, minutes, euclid, speed)
        total = euclid(o, j)
        assert euclid(o, p) + euclid(p, j) == pytest.approx(total, abs=1e-7 * (1 + total))


def _market(locs, zones=(), radius=0.5, **kw):
    outlets = [Outlet(f"S{i}", Point(*xy), 80.0) for i, xy in enumerate(locs)]
    return Market(outlets, list(zones), MetricDistance(), comp_radius=radius, **kw)


class TestLocalCompetition:
    def test_single_outlet(self):
        m = _market([(0, 0)])
        assert local_competition(m.outlets[0], m) == 0

    def test_direct_count(self):
        m = _market([(0, 0), (0.3, 0), (0, 0.6)])
        assert local_competition(m.outlets[0], m) == 1

    def test_boundary_inclusive(self):
        m = _market([(0, 0), (0.5, 0)])
        assert local_competition(m.outlets[0], m) == 1

    @given(st.lists(st.tuples(st.floats(0, 2), st.floats(0, 2)), min_size=2, max_size=12))
    def test_symmetric_contribution(self, locs):
        m = _market(locs)
        d = m.distances.pairwise(m.outlet_xy, m.outlet_xy)
        within = (d <= m.comp_radius) & ~np.eye(len(locs), dtype=bool)
        assert np.array_equal(within, within.T)
        assert np.array_equal(m.competition, within.sum(axis=1))


class TestAgglomeration:
    def test_zone_at_outlet(self):
        m = _market([(1, 1)], [Zone("z", Point(1, 1), 10.0)])
        assert agglomeration_index(m.outlets[0], m) == pytest.approx(10.0)

    def test_one_t_star_away(self):
        # r = d / speed = T*  ->  10 * exp(-1/2)
        m = _market([(0, 0)], [Zone("z", Point(13.22 * 0.24, 0), 10.0)])
        assert agglomeration_index(m.outlets[0], m) == pytest.approx(10 * math.exp(-0.5), abs=1e-12)
        assert agglomeration_index(m.outlets[0], m) == pytest.approx(6.0653, abs=1e-4)

    def test_no_zones(self):
        m = _market([(0, 0)])
        assert agglomeration_index(m.outlets[0], m) == 0.0

    @given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 100))
    def test_monotone_in_distance(self, d1, d2, opp):
        near, far = sorted((d1, d2))
        a = _market([(0, 0)], [Zone("z", Point(near, 0), opp)]).agglomeration[0]
        b = _market([(0, 0)], [Zone("z", Point(far, 0), opp)]).agglomeration[0]
        assert b <= a + 1e-12

    @given(st.lists(st.floats(0, 50), min_size=1, max_size=6), st.floats(0, 10))
    def test_linear_in_opportunities(self, opps, k):
        zones = [Zone(f"z{i}", Point(i * 0.7, 1.0), o) for i, o in enumerate(opps)]
        scaled = [Zone(z.id, z.centroid, z.opportunities * k) for z in zones]
        a = _market([(0, 0)], zones).agglomeration[0]
        b = _market([(0, 0)], scaled).agglomeration[0]
        assert b == pytest.approx(k * a, rel=1e-9, abs=1e-9)


class TestMoran:
    def test_expected_for_72_sites(self, rng):
        xy = rng.uniform(0, 10, size=(72, 2))
        res = morans_i(rng.normal(size=72), xy, n_permutations=9)
        assert res.expected == pytest.approx(-1 / 71)
        assert round(res.expected, 4) == -0.0141

    def test_statistic_matches_oracle(self, rng):
        xy = rng.uniform(0, 10, size=(15, 2))
        x = rng.normal(size=15)
        assert morans_i(x, xy, n_permutations=9).statistic == pytest.approx(moran_oracle(x, xy), rel=1e-12)

    def test_two_clusters(self, rng):
        a = rng.normal(0, 0.2, size=(10, 2))
        b = rng.normal(0, 0.2, size=(10, 2)) + 8.0
        x = np.r_[np.zeros(10), np.ones(10)]
        res = morans_i(x, np.vstack([a, b]))
        assert res.statistic > 0
        assert res.p_value < 0.05

    def test_constant_values(self):
        with pytest.raises(ZeroVariance):
            morans_i([2.0, 2.0, 2.0], [(0, 0), (1, 0), (0, 1)])

    def test_too_few_sites(self):
        with pytest.raises(TooFewSites):
            morans_i([1.0, 2.0], [(0, 0), (1, 0)])

    def test_seeded(self, rng):
        xy = rng.uniform(0, 10, size=(20, 2))
        x = rng.normal(size=20)
        assert morans_i(x, xy, seed=3) == morans_i(x, xy, seed=3)

    def test_weights_row_standardized(self, rng):
        w = spatial_weights(rng.uniform(0, 5, size=(9, 2)))
        assert np.allclose(w.sum(axis=1), 1.0)
        assert np.all(np.diag(w) == 0)

    def test_null_rejection_rate(self):
        rng = np.random.default_rng(7)
        xy = rng.uniform(0, 10, size=(40, 2))
        rejections = sum(
            morans_i(rng.normal(size=40), xy, n_permutations=199, seed=s).p_value < 0.05 for s in range(200)
        )
        assert 0.01 <= rejections / 200 <= 0.12


class TestMatrixMode:
    def _market(self, matrix):
        ids = ["A", "B", "Z1", "Z2"]
        outlets = [Outlet("A", Point(1, 0), 80.0), Outlet("B", Point(1, 1), 85.0)]
        zones = [Zone("Z1", Point(0, 0), 1.0), Zone("Z2", Point(2, 0), 1.0)]
        return Market(outlets, zones, MatrixDistance(ids, matrix))

    def test_features_from_matrix(self):
        m = np.array([[0, 1.2, 1.1, 1.0], [1.2, 0, 1.5, 1.6], [1.1, 1.5, 0, 2.0], [1.0, 1.6, 2.0, 0]])
        market = self._market(m)
        obs = [Observation("t", "Z1", "Z2", "A", True)]
        X = build_design(obs, market).X[0]
        assert X[0, 0] == pytest.approx((1.1 + 1.0 - 2.0) / 2.0)
        assert X[1, 1] == pytest.approx(1.5)

    def test_negative_detour_warns(self):
        # A sits on a "shortcut": d(Z1,A) + d(A,Z2) < d(Z1,Z2)
        m = np.array([[0, 1.2, 0.5, 0.5], [1.2, 0, 1.5, 1.6], [0.5, 1.5, 0, 2.0], [0.5, 1.6, 2.0, 0]])
        market = self._market(m)
        with pytest.warns(DataWarning, match="negative detour"):
            X = build_design([Observation("t", "Z1", "Z2", "A", True)], market).X
        assert X[0, 0, 0] < 0  # reported, not clamped

    def test_unknown_point(self):
        m = np.zeros((4, 4)) + 1 - np.eye(4)
        market = self._market(m)
        with pytest.raises(UnknownLocation):
            market.distances(Point(9, 9), Point(0, 0))
        assert market.resolve_position(Point(1.9, 0.1)) == Point(2, 0)
