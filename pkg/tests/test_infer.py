import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from robls.dist import reference_models
from robls.exceptions import DegenerateDataError, InvalidInputError, NumericalUnderflowError
from robls.infer import (
    NONINFORMATIVE,
    GridSpec,
    OutlierConfig,
    Prior,
    common_grid_spec,
    log_likelihood,
    marginal_ratio,
    mle_fit,
    posterior_grid,
    posterior_l1_distance,
    posterior_log_density,
    posterior_summaries,
)

MODELS = reference_models()
NORMAL, LP, T = MODELS["normal"], MODELS["log-pareto"], MODELS["student-t"]
X_K = np.arange(-10.0, 11.0)
X_N = np.append(X_K, 100.0)

# Composite Gauss-Legendre over (mu, log sigma) with a separate density
# implementation: log m(x_k) and m(x_n)/(m(x_k) f(x_out)) for one right outlier
LOG_M_XK = -67.37882586489569
# marginal posterior median of sigma on x_k: adaptive quad over mu, trapezoid in log sigma
SIGMA_MEDIAN_XK = 6.375080151122212
RATIO_ORACLE = {1e3: 3.6457794174292393, 1e5: 2.0616651737609124, 1e6: 1.8098384695520502}


class TestLogLikelihood:
    def test_mode(self):
        assert log_likelihood(NORMAL, [0.0, 0.0], 0.0, 1.0) == pytest.approx(2 * math.log(0.398942280401433),
                                                                                rel=1e-13)

    def test_core_branch_equals_normal(self):
        assert np.all(np.abs(X_K) / 6.0553 < LP.alpha)
        assert log_likelihood(LP, X_K, 0.0, 6.0553) == pytest.approx(
            log_likelihood(NORMAL, X_K, 0.0, 6.0553), rel=1e-14)

    def test_matches_density(self):
        for fam in MODELS.values():
            m = fam.locscale(1.3, 2.2)
            assert log_likelihood(fam, X_N, 1.3, 2.2) == pytest.approx(float(np.sum(m.logpdf(X_N))), rel=1e-13)

    def test_far_outlier_finite(self):
        assert math.isfinite(log_likelihood(LP, [0.0, 1.0, 1e300], 0.0, 1.0))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, xs, rnd):
        ys = list(xs)
        rnd.shuffle(ys)
        for fam in MODELS.values():
            a, b = log_likelihood(fam, xs, 0.5, 3.0), log_likelihood(fam, ys, 0.5, 3.0)
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_rejects_sigma(self, sigma):
        with pytest.raises(InvalidInputError):
            log_likelihood(NORMAL, X_K, 0.0, sigma)

    @pytest.mark.parametrize("data", [[1.0], [], [0.0, math.nan], [0.0, math.inf]])
    def test_rejects_data(self, data):
        with pytest.raises(InvalidInputError):
            log_likelihood(NORMAL, data, 0.0, 1.0)


class TestMle:
    def test_normal_closed_form_example(self):
        fit = mle_fit(NORMAL, X_N)
        assert fit.converged
        assert fit.mu_hat == pytest.approx(100 / 22, abs=1e-6)
        assert fit.sigma_hat == pytest.approx(math.sqrt(10770 / 22 - (100 / 22) ** 2), abs=1e-6)
        assert round(fit.mu_hat, 2) == 4.55 and round(fit.sigma_hat, 2) == 21.65

    def test_log_pareto_reference_values(self):
        fit = mle_fit(LP, X_K)
        assert abs(fit.mu_hat) < 1e-6 and round(fit.sigma_hat, 2) == 6.06
        fit = mle_fit(LP, X_N)
        assert round(fit.mu_hat, 2) == 0.05 and round(fit.sigma_hat, 2) == 6.28

    def test_log_pareto_x_k_is_normal_fit(self):
        # all points sit in the core, so the fit is the normal one: mean 0, sd sqrt(110/3)
        assert mle_fit(LP, X_K).sigma_hat == pytest.approx(math.sqrt(770 / 21), abs=1e-6)

    def test_student_t(self):
        fit = mle_fit(T, X_N)
        assert fit.mu_hat == pytest.approx(0.345885, abs=1e-5)
        assert fit.sigma_hat == pytest.approx(8.439873, abs=1e-5)

    def test_normal_closed_form_random(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            x = rng.normal(rng.uniform(-50, 50), rng.uniform(0.1, 20), size=rng.integers(5, 51))
            fit = mle_fit(NORMAL, x)
            assert fit.converged
            assert fit.mu_hat == pytest.approx(x.mean(), abs=1e-6)
            assert fit.sigma_hat == pytest.approx(x.std(), abs=1e-6)

    @pytest.mark.parametrize("name", list(MODELS))
    def test_local_maximum(self, name):
        fam = MODELS[name]
        fit = mle_fit(fam, X_N)
        h = 10 * 1e-8
        for dm, dt in ((h, 0), (-h, 0), (0, h), (0, -h)):
            ll = log_likelihood(fam, X_N, fit.mu_hat + dm * fit.sigma_hat, fit.sigma_hat * math.exp(dt))
            assert ll <= fit.log_likelihood_at_max + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(0.01, 100.0))
    def test_equivariance(self, c, s):
        for fam in (LP, T):
            base = mle_fit(fam, X_N)
            shifted = mle_fit(fam, X_N + c)
            assert shifted.mu_hat == pytest.approx(base.mu_hat + c, abs=1e-6 * (1 + abs(c)))
            assert shifted.sigma_hat == pytest.approx(base.sigma_hat, rel=1e-6)
            scaled = mle_fit(fam, X_N * s)
            assert scaled.mu_hat == pytest.approx(base.mu_hat * s, abs=1e-6 * s * base.sigma_hat)
            assert scaled.sigma_hat == pytest.approx(base.sigma_hat * s, rel=1e-6)

    def test_non_convergence_flag(self):
        fit = mle_fit(LP, X_N, maxiter=5)
        assert not fit.converged and fit.sigma_hat > 0

    def test_init_and_serialization(self):
        fit = mle_fit(NORMAL, X_N, init=(0.0, 1.0), multistart=False)
        assert fit.mu_hat == pytest.approx(100 / 22, abs=1e-6)
        d = json.loads(json.dumps(fit.to_dict()))
        assert set(d) == {"mu_hat", "sigma_hat", "log_likelihood_at_max", "iterations", "converged"}

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            mle_fit(NORMAL, [3.0, 3.0, 3.0])
        with pytest.raises(InvalidInputError):
            mle_fit(NORMAL, [3.0, 3.0])

    def test_bad_init(self):
        with pytest.raises(InvalidInputError):
            mle_fit(NORMAL, X_K, init=(0.0, -1.0))


class TestPosteriorGrid:
    def test_normalized(self):
        g = posterior_grid(LP, X_K)
        assert g.coverage_ok and not g.warnings
        assert g.mass == pytest.approx(1.0, abs=1e-12)
        assert np.all(g.values >= 0)

    def test_log_marginal_oracle(self):
        assert posterior_grid(LP, X_K).log_marginal == pytest.approx(LOG_M_XK, abs=1e-4)

    def test_refinement_stable(self):
        spec = posterior_grid(LP, X_K).spec
        a = posterior_grid(LP, X_K, grid_spec=spec, max_expansions=0).log_marginal
        b = posterior_grid(LP, X_K, grid_spec=spec.refined(2), max_expansions=0).log_marginal
        assert abs(a - b) < 1e-3

    def test_normal_two_point_marginal(self):
        # integral over mu in R and sigma in [s0, s1] of pi(mu,sigma) f(x1) f(x2) with x = (-1, 1)
        # reduces to (1/4)(erf(1/s0) - erf(1/s1)); the mu range is wide enough to be exact
        spec = GridSpec((-400.0, 400.0), (0.2, 50.0), 4001, 400)
        g = posterior_grid(NORMAL, [-1.0, 1.0], grid_spec=spec, max_expansions=0)
        exact = 0.25 * (erf(5.0) - erf(0.02))
        assert math.exp(g.log_marginal) == pytest.approx(exact, rel=1e-5)

    def test_argmax_matches_mle(self):
        g = posterior_grid(LP, X_K)
        fit = mle_fit(LP, X_K)
        mu, sigma = g.argmax(weight_sigma=True)
        dmu = g.mu_nodes[1] - g.mu_nodes[0]
        dt = math.log(g.sigma_nodes[1] / g.sigma_nodes[0])
        assert abs(mu - fit.mu_hat) <= dmu
        assert abs(math.log(sigma / fit.sigma_hat)) <= dt

    def test_argmax_ties_lowest_index(self):
        g = posterior_grid(NORMAL, X_K)
        flat = type(g)(g.mu_nodes, g.sigma_nodes, np.ones_like(g.values), g.cell_weights, 0.0, g.spec, 0.0)
        assert flat.argmax() == (g.mu_nodes[0], g.sigma_nodes[0])

    def test_symmetric_median(self):
        g = posterior_grid(NORMAL, [-1.0, 1.0])
        s = posterior_summaries(g)
        assert abs(s["mu_median"]) < g.mu_nodes[1] - g.mu_nodes[0]
        lo, hi = s["mu_interval"]
        assert lo == pytest.approx(-hi, abs=1e-9)

    def test_summaries_x_k(self):
        s = posterior_summaries(posterior_grid(LP, X_K))
        assert abs(s["mu_median"]) < 0.1
        assert s["sigma_median"] == pytest.approx(SIGMA_MEDIAN_XK, rel=1e-3)
        assert s["sigma_interval"][0] < s["sigma_median"] < s["sigma_interval"][1]

    @pytest.mark.xfail(strict=True, reason="the 1/sigma prior puts the marginal sigma median at 6.375")
    def test_sigma_median_reference_band(self):
        s = posterior_summaries(posterior_grid(LP, X_K))
        assert abs(s["sigma_median"] - 6.06) < 0.3

    @pytest.mark.parametrize("level", [0.0, 1.0, -0.5, 1.5])
    def test_summaries_level(self, level):
        with pytest.raises(InvalidInputError):
            posterior_summaries(posterior_grid(LP, X_K), level)

    def test_expansion_and_warning(self):
        tiny = GridSpec((-1.0, 1.0), (5.0, 7.0), 50, 50)
        g = posterior_grid(LP, X_K, grid_spec=tiny, max_expansions=0)
        assert not g.coverage_ok and g.warnings
        g = posterior_grid(LP, X_K, grid_spec=tiny, max_expansions=3)
        assert g.spec.mu_range == (-8.0, 8.0)

    def test_underflow(self):
        far = GridSpec((1e300, 1.1e300), (1e-3, 2e-3), 5, 5)
        with pytest.raises(NumericalUnderflowError):
            posterior_grid(NORMAL, X_K, grid_spec=far, max_expansions=0)

    @pytest.mark.parametrize("rng", [((0, 1), (0.0, 1.0)), ((0, 1), (-1.0, 1.0)), ((1, 0), (1.0, 2.0))])
    def test_bad_spec(self, rng):
        with pytest.raises(InvalidInputError):
            GridSpec(*rng)

    def test_custom_prior_matches_default(self):
        p = Prior.custom(lambda mu, sigma: -np.log(sigma))
        spec = posterior_grid(LP, X_K).spec
        a = posterior_grid(LP, X_K, NONINFORMATIVE, spec)
        b = posterior_grid(LP, X_K, p, spec)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12)

    def test_unbounded_custom_prior(self):
        p = Prior.custom(lambda mu, sigma: np.where(sigma < 1, np.inf, 0.0) + 0 * mu)
        with pytest.raises(InvalidInputError):
            posterior_grid(LP, X_K, p, GridSpec((-5, 5), (0.5, 20.0), 20, 20))

    def test_pointwise_density(self):
        g = posterior_grid(LP, X_K)
        v = posterior_log_density(LP, X_K, NONINFORMATIVE, g.log_marginal, g.mu_nodes[200], g.sigma_nodes[150])
        assert math.exp(v[0, 0]) == pytest.approx(g.values[200, 150], rel=1e-12)

    def test_csv(self):
        g = posterior_grid(NORMAL, [-1.0, 1.0], grid_spec=GridSpec((-2, 2), (0.5, 2.0), 3, 4), max_expansions=0)
        buf = io.StringIO()
        g.to_csv(buf)
        rows = buf.getvalue().strip().splitlines()
        assert rows[0] == "mu,sigma,density" and len(rows) == 13
        assert float(rows[1].split(",")[2]) == g.values[0, 0]


class TestL1AndMarginalRatio:
    cfg = OutlierConfig.with_outliers(X_K, right=[(0.0, 1.0)])

    def _l1(self, omega):
        xn = self.cfg.at(omega).data
        spec = common_grid_spec(LP, [xn, X_K])
        return posterior_l1_distance(posterior_grid(LP, xn, grid_spec=spec, max_expansions=0),
                                     posterior_grid(LP, X_K, grid_spec=spec, max_expansions=0))

    def test_identical(self):
        g = posterior_grid(LP, X_K)
        assert posterior_l1_distance(g, g) == 0.0

    def test_disjoint(self):
        spec = GridSpec((-20, 20), (0.05, 2.0), 801, 200)
        g1 = posterior_grid(NORMAL, [-10.1, -10.0, -9.9], grid_spec=spec, max_expansions=0)
        g2 = posterior_grid(NORMAL, [9.9, 10.0, 10.1], grid_spec=spec, max_expansions=0)
        assert posterior_l1_distance(g1, g2) == pytest.approx(2.0, abs=1e-6)

    def test_mismatch(self):
        with pytest.raises(InvalidInputError):
            posterior_l1_distance(posterior_grid(LP, X_K), posterior_grid(LP, X_N))

    def test_decreasing(self):
        d4, d6 = self._l1(1e4), self._l1(1e6)
        assert d4 == pytest.approx(0.06977, abs=1e-4)
        assert d6 < d4

    @pytest.mark.xfail(strict=True, reason="measured 0.0698 at omega = 1e4; the rate in omega is logarithmic")
    def test_l1_reference_bound(self):
        assert self._l1(1e4) < 0.05

    def test_counts(self):
        c = OutlierConfig.with_outliers([1, 2, 3], right=[(0, 2)], left=[(1, 1), (0, 3)], omega=10)
        assert (c.k, c.l, c.r) == (3, 2, 1)
        np.testing.assert_array_equal(c.data, [1, 2, 3, 20, -9, -30])
        np.testing.assert_array_equal(c.nonoutliers, [1, 2, 3])

    def test_no_outliers(self):
        assert marginal_ratio(OutlierConfig.with_outliers(X_K, omega=1e6), LP) == 1.0

    def test_config_errors(self):
        with pytest.raises(InvalidInputError):
            OutlierConfig((1.0,), (0.0, 1.0))
        with pytest.raises(InvalidInputError):
            OutlierConfig((1.0, 2.0), (0.0, 1.0), omega=-1.0)
        with pytest.raises(InvalidInputError):
            marginal_ratio(OutlierConfig.with_outliers([0.0], right=[(0, 1)], omega=10), LP)

    @pytest.mark.parametrize("omega", sorted(RATIO_ORACLE))
    def test_ratio_oracle(self, omega):
        assert marginal_ratio(self.cfg.at(omega), LP) == pytest.approx(RATIO_ORACLE[omega], rel=1e-5)

    def test_ratio_approaches_one(self):
        r3, r5 = (marginal_ratio(self.cfg.at(w), LP) for w in (1e3, 1e5))
        assert abs(r5 - 1) < abs(r3 - 1)

    @pytest.mark.xfail(strict=True, reason="measured 1.810 at omega = 1e6")
    def test_ratio_provisional_tolerance(self):
        assert abs(marginal_ratio(self.cfg.at(1e6), LP) - 1) < 0.1

    def test_ratio_diverges_for_light_tails(self):
        # f(x_out) vanishes far faster than m(x_n) under a normal model
        assert marginal_ratio(self.cfg.at(1e3), NORMAL) == math.inf
        assert marginal_ratio(self.cfg.at(30.0), NORMAL) > 1e10
