import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onway.choice import CoefficientSet, StrategyContext, choice_probabilities, table1_coefficients
from onway.design import build_design
from onway.errors import DataError, SingularHessianWarning
from onway.estimation import (
    ModelFamily,
    fit,
    information_criteria,
    log_likelihood,
    log_likelihood_gradient,
    select_strategy_count,
    standard_errors,
    standard_errors_from_information,
)
from onway.spatial import Market, Outlet
from onway.synth import generate_synthetic

T1 = table1_coefficients("latent2")


def loglik_oracle(coeffs, trips, market):
    """Observation-by-observation sum through the public probability API."""
    design = build_design(trips, market)
    total = 0.0
    for i, ob in enumerate(trips):
        z = StrategyContext(ob.regular, ob.aware_before, ob.morning)
        total += math.log(choice_probabilities(coeffs, z, design.X[i])[design.chosen[i]])
    return total


def central_difference(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


class TestInformationCriteria:
    def test_published_loglik(self):
        ic = information_criteria(-680.30, 15, 280)
        assert ic.aic == pytest.approx(1390.6, abs=1e-9)
        assert ic.bic == pytest.approx(15 * math.log(280) + 1360.6, abs=1e-9)
        assert ic.bic == pytest.approx(1445.12, abs=0.01)

    def test_parameter_counts(self):
        assert ModelFamily.latent(2).n_params == 15
        assert ModelFamily.latent(3).n_params == 25
        assert ModelFamily.single().n_params == 5
        assert ModelFamily.gravity().n_params == 2
        assert ModelFamily.extended_gravity().n_params == 4
        assert ModelFamily.mixed().n_params == 10

    def test_names_roundtrip(self):
        for name in ("latent2", "latent3", "single", "gravity", "xgravity", "mixed"):
            assert ModelFamily.from_name(name).name == name
        with pytest.raises(ValueError):
            ModelFamily.from_name("probit")


class TestLikelihood:
    def test_matches_per_observation_oracle(self, small_market, small_trips):
        assert log_likelihood(T1, small_trips, small_market) == pytest.approx(
            loglik_oracle(T1, small_trips, small_market), rel=1e-12
        )

    def test_single_strategy_oracle(self, medium_market, medium_trips):
        c = table1_coefficients("single")
        assert log_likelihood(c, medium_trips, medium_market) == pytest.approx(
            loglik_oracle(c, medium_trips, medium_market), rel=1e-12
        )

    @pytest.mark.parametrize("name", ["latent2", "latent3", "single", "gravity", "xgravity", "mixed"])
    def test_gradient_central_differences(self, name, small_market, small_trips):
        fam = ModelFamily.from_name(name, draws=20, seed=1)
        design = build_design(small_trips, small_market, from_origin=fam.from_origin)
        rng = np.random.default_rng(len(name) * 101)
        for _ in range(5):
            theta = rng.normal(0, 0.5, fam.n_params)
            c = fam.unpack(theta)
            g = log_likelihood_gradient(c, design, family=fam)
            fd = central_difference(lambda t: log_likelihood(fam.unpack(t), design, family=fam), theta)
            assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))) < 1e-5

    def test_hand_logit_information(self, medium_market, medium_trips):
        c = table1_coefficients("single")
        design = build_design(medium_trips, medium_market)
        v = design.X @ c.betas[0]
        p = np.exp(v - v.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        xbar = np.einsum("nj,njk->nk", p, design.X)
        dev = design.X - xbar[:, None, :]
        info = np.einsum("nj,njk,njl->kl", p, dev, dev)
        expected = np.sqrt(np.diag(np.linalg.inv(info)))
        got = standard_errors(c, design, family=ModelFamily.single())
        assert got == pytest.approx(expected, rel=1e-4)

    def test_singular_information(self, medium_market):
        # quality an exact affine copy of COMP: not separately identified
        comp = medium_market.competition
        outlets = [Outlet(o.id, o.location, 80.0 + 2.0 * k) for o, k in zip(medium_market.outlets, comp)]
        m = Market(outlets, medium_market.zones, medium_market.distances)
        trips = generate_synthetic(table1_coefficients("single"), m, 300, seed=2)
        with pytest.warns(SingularHessianWarning):
            assert standard_errors(table1_coefficients("single"), trips, m) is None
        res = fit(ModelFamily.single(), trips, m)
        assert res.std_errors is None
        assert "singular" in res.diagnostic

    def test_information_helper(self):
        assert standard_errors_from_information(np.diag([4.0, 25.0])) == pytest.approx([0.5, 0.2])
        with pytest.warns(SingularHessianWarning):
            assert standard_errors_from_information([[1.0, 1.0], [1.0, 1.0]]) is None


class TestFit:
    def test_single_converges(self, medium_market, medium_trips):
        res = fit(ModelFamily.single(), medium_trips, medium_market)
        assert res.converged
        assert res.grad_norm <= 1e-6
        assert res.k_params == 5
        assert res.aic == pytest.approx(2 * 5 - 2 * res.loglik)

    def test_nesting(self, medium_market, medium_trips):
        single = fit(ModelFamily.single(), medium_trips, medium_market)
        latent = fit(ModelFamily.latent(2), medium_trips, medium_market, n_starts=3)
        assert latent.loglik >= single.loglik - 1e-4

    def test_canonical_order(self, medium_market, medium_trips):
        res = fit(ModelFamily.latent(2), medium_trips, medium_market, n_starts=3)
        assert res.coefficients.betas[0, 0] >= res.coefficients.betas[1, 0]

    def test_deterministic(self, medium_market, medium_trips):
        a = fit(ModelFamily.latent(2), medium_trips, medium_market, n_starts=2, seed=4)
        b = fit(ModelFamily.latent(2), medium_trips, medium_market, n_starts=2, seed=4)
        assert a.coefficients == b.coefficients
        assert a.loglik == b.loglik

    def test_trace_monotone(self, medium_market, medium_trips):
        res = fit(ModelFamily.single(), medium_trips, medium_market, trace=True)
        tr = np.asarray(res.trace)
        assert len(tr) > 2
        assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[:-1]))

    def test_relabel_and_reorder_invariance(self, medium_market, medium_trips):
        base = fit(ModelFamily.single(), medium_trips, medium_market)
        outlets = list(reversed(medium_market.outlets))
        m2 = Market(outlets, medium_market.zones, medium_market.distances)
        res = fit(ModelFamily.single(), list(reversed(medium_trips)), m2)
        assert res.loglik == pytest.approx(base.loglik, abs=1e-6)
        assert res.coefficients.betas == pytest.approx(base.coefficients.betas, abs=1e-4)

    def test_gravity_ignores_detour(self, medium_market, medium_trips):
        res = fit(ModelFamily.gravity(), medium_trips, medium_market)
        b = res.coefficients.betas[0]
        assert b[0] == b[2] == b[3] == 0.0
        assert res.k_params == 2
        assert len(res.std_errors) == 2

    def test_mixed_draw_stability(self, medium_market, medium_trips):
        c = table1_coefficients("mixed")
        l200 = log_likelihood(c, medium_trips, medium_market, ModelFamily.mixed(200, seed=3))
        l400 = log_likelihood(c, medium_trips, medium_market, ModelFamily.mixed(400, seed=3))
        assert abs(l200 - l400) / abs(l400) < 0.005

    def test_mixed_fit_runs(self, medium_market, medium_trips):
        res = fit(ModelFamily.mixed(30, seed=1), medium_trips, medium_market, n_starts=2)
        assert res.k_params == 10
        assert np.isfinite(res.loglik)

    def test_confidence_intervals(self, medium_market, medium_trips):
        res = fit(ModelFamily.single(), medium_trips, medium_market)
        ci = res.confidence_intervals()
        assert np.all(ci[:, 0] < res.estimates) and np.all(res.estimates < ci[:, 1])

    def test_empty_dataset(self, medium_market):
        with pytest.raises(DataError):
            fit(ModelFamily.single(), [], medium_market)

    def test_strategy_count_selection(self, medium_market, medium_trips):
        best, results = select_strategy_count(medium_trips, medium_market, ks=(1, 2), n_starts=2, compute_se=False)
        assert set(results) == {1, 2}
        assert best == min(results, key=lambda k: results[k].aic)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_loglik_nonpositive(seed):
    from tests.conftest import three_outlet_market

    m = three_outlet_market()
    rng = np.random.default_rng(seed)
    c = CoefficientSet(rng.normal(0, 1, (2, 5)), rng.normal(0, 1, (1, 5)))
    trips = generate_synthetic(T1, m, 10, seed=seed)
    assert log_likelihood(c, trips, m) <= 0.0
