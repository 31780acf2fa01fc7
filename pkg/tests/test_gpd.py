import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from v2vtail.gpd import (SIGMA_MIN, XI_MAX, GpdParams, GpdTailEstimator,
                         GradientPair, SvrgdState, fit_gpd_svrgd, gpd_moments,
                         gpd_pdf, gpd_ppf, gpd_sample, nll, nll_gradient,
                         project_feasible, svrgd_step)


class TestPdf:
    def test_exponential_at_origin(self):
        assert gpd_pdf(0.0, GpdParams(1.0, 0.0)) == pytest.approx(1.0)

    def test_positive_shape_value(self):
        # (1/2) * (1 + 0.5*2/2)^(-3) = 0.5 * 1.5^-3
        assert gpd_pdf(2.0, GpdParams(2.0, 0.5)) == pytest.approx(0.5 * 1.5 ** -3)

    def test_continuity_at_zero_shape(self):
        assert gpd_pdf(3.0, GpdParams(1.0, 1e-12)) == pytest.approx(math.exp(-3), abs=1e-9)

    def test_support_error(self):
        with pytest.raises(ValueError):
            gpd_pdf(11.0, GpdParams(sigma=2.0, xi=-0.2))  # support ends at 10
        with pytest.raises(ValueError):
            gpd_pdf(-0.5, GpdParams(1.0, 0.1))

    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            sigma = float(rng.uniform(0.2, 8))
            xi = float(rng.uniform(-0.4, 0.45))
            x = float(rng.uniform(0, 3 * sigma))
            if xi < 0:
                x = min(x, -sigma / xi * 0.99)
            assert gpd_pdf(x, GpdParams(sigma, xi)) == pytest.approx(
                scipy.stats.genpareto.pdf(x, c=xi, scale=sigma), rel=1e-9)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 5.0])
    @pytest.mark.parametrize("xi", [-0.4, 0.0, 0.3, 0.45])
    def test_normalization(self, sigma, xi):
        theta = GpdParams(sigma, xi)
        hi = -sigma / xi * (1 - 1e-12) if xi < 0 else sigma * 2000
        val, _ = scipy.integrate.quad(lambda x: gpd_pdf(x, theta), 0, hi, limit=400)
        assert val == pytest.approx(1.0, abs=1e-6)


class TestMoments:
    def test_exponential_case(self):
        assert gpd_moments(GpdParams(1.0, 0.0)) == pytest.approx((1.0, 2.0))

    def test_formula_case(self):
        mean, second = gpd_moments(GpdParams(2.0, 0.25))
        assert mean == pytest.approx(8 / 3)
        assert second == pytest.approx(8 / 0.375)

    def test_boundary_error(self):
        with pytest.raises(ValueError):
            gpd_moments(GpdParams(1.0, 0.5))

    def test_monte_carlo_consistency(self):
        theta = GpdParams(2.0, 0.2)
        rng = np.random.default_rng(77)
        draws = gpd_sample(theta, 10 ** 6, rng)
        mean, second = gpd_moments(theta)
        # 3 standard errors of the Monte Carlo estimators
        se_mean = draws.std() / 1000
        se_second = (draws ** 2).std() / 1000
        assert abs(draws.mean() - mean) < 3 * se_mean
        assert abs((draws ** 2).mean() - second) < 3 * se_second

    def test_ppf_matches_scipy(self):
        theta = GpdParams(1.5, 0.3)
        u = np.linspace(0.01, 0.99, 23)
        np.testing.assert_allclose(
            gpd_ppf(u, theta),
            scipy.stats.genpareto.ppf(u, c=0.3, scale=1.5), rtol=1e-9)


class TestNll:
    def test_single_exponential_sample(self):
        assert nll([1.0], GpdParams(1.0, 0.0)) == pytest.approx(1.0)

    def test_partition_identity(self):
        rng = np.random.default_rng(4)
        x = gpd_sample(GpdParams(1.0, 0.2), 801, rng)
        theta = GpdParams(1.3, 0.1)
        whole = nll(x, theta)
        for split in (1, 100, 400, 800):
            a, b = x[:split], x[split:]
            wa, wb = a.size / x.size, b.size / x.size
            assert wa * nll(a, theta) + wb * nll(b, theta) == pytest.approx(
                whole, abs=1e-12)

    def test_infeasible_theta(self):
        with pytest.raises(ValueError):
            nll([10.0], GpdParams(1.0, -0.2))  # support ends at 5

    def test_truth_beats_coarse_grid_on_synthetic_data(self):
        rng = np.random.default_rng(10)
        theta_star = GpdParams(1.0, 0.2)
        x = gpd_sample(theta_star, 5000, rng)
        base = nll(x, theta_star)
        for ds in (-0.3, -0.15, 0.15, 0.3):
            for dx in (-0.15, -0.08, 0.08, 0.15):
                other = GpdParams(1.0 + ds, 0.2 + dx)
                assert nll(x, other) > base - 5e-3


class TestGradient:
    def _fd(self, x, sigma, xi, h=1e-6):
        def f(s, c):
            return nll([x], GpdParams(s, c))
        return ((f(sigma + h, xi) - f(sigma - h, xi)) / (2 * h),
                (f(sigma, xi + h) - f(sigma, xi - h)) / (2 * h))

    def test_against_finite_differences_spec_point(self):
        g = nll_gradient(1.5, GpdParams(2.0, 0.3))
        fd_s, fd_x = self._fd(1.5, 2.0, 0.3)
        assert g.d_sigma == pytest.approx(fd_s, rel=1e-5)
        assert g.d_xi == pytest.approx(fd_x, rel=1e-5)

    def test_hundred_random_interior_points(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            sigma = float(rng.uniform(0.3, 10))
            xi = float(rng.uniform(-0.45, 0.45))
            if abs(xi) < 5e-3:
                xi = 5e-3 * (1 if xi >= 0 else -1)
            x = float(rng.uniform(0.05, 3 * sigma))
            if xi < 0:
                x = min(x, 0.9 * -sigma / xi)
            g = nll_gradient(x, GpdParams(sigma, xi))
            fd_s, fd_x = self._fd(x, sigma, xi, h=1e-6 * max(1, sigma))
            assert g.d_sigma == pytest.approx(fd_s, rel=1e-5, abs=1e-8)
            assert g.d_xi == pytest.approx(fd_x, rel=1e-5, abs=1e-8)

    def test_stationary_in_sigma_at_x_equals_sigma(self):
        for xi in (1e-9, 1e-7, 1e-4):
            g = nll_gradient(1.0, GpdParams(1.0, xi))
            assert abs(g.d_sigma) < 1e-6

    def test_cross_regime_stability(self):
        g_tiny = nll_gradient(2.0, GpdParams(1.5, 1e-12))
        g_small = nll_gradient(2.0, GpdParams(1.5, 1e-7))
        assert g_tiny.d_sigma == pytest.approx(g_small.d_sigma, abs=1e-4)
        assert g_tiny.d_xi == pytest.approx(g_small.d_xi, abs=1e-4)

    def test_singularity_raises(self):
        with pytest.raises(ValueError):
            nll_gradient(5.0, GpdParams(1.0, -0.2))


class TestProjection:
    def test_interior_unchanged(self):
        out = project_feasible((2.0, 0.1), max_sample=10.0)
        assert (out.sigma, out.xi) == (2.0, 0.1)

    def test_negative_sigma_clamped(self):
        out = project_feasible((-1.0, 0.1), max_sample=0.0)
        assert out.sigma == SIGMA_MIN and out.xi == pytest.approx(0.1)

    def test_halfplane_projection(self):
        # closest feasible point to (1, -2) with max_sample 1 lies on xi = -sigma
        out = project_feasible((1.0, -2.0), max_sample=1.0)
        assert out.sigma == pytest.approx(1.5)
        assert out.xi == pytest.approx(-1.5)

    def test_xi_cap(self):
        out = project_feasible((3.0, 0.8), max_sample=5.0)
        assert out.xi == pytest.approx(XI_MAX) and out.sigma == pytest.approx(3.0)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            cand = (float(rng.uniform(-3, 4)), float(rng.uniform(-3, 1.5)))
            q = float(rng.uniform(0.0, 5.0))
            got = project_feasible(cand, q)
            sig = np.linspace(SIGMA_MIN, 6, 401)
            xi = np.linspace(-4, XI_MAX, 401)
            ss, xx = np.meshgrid(sig, xi)
            ok = np.ones_like(ss, dtype=bool)
            if q > 0:
                ok &= ss + xx * q >= 0
            d2 = (ss - cand[0]) ** 2 + (xx - cand[1]) ** 2
            best = d2[ok].min()
            got_d2 = (got.sigma - cand[0]) ** 2 + (got.xi - cand[1]) ** 2
            assert got_d2 <= best + 1e-3  # grid resolution slack


class TestSvrgdStep:
    def test_cancellation_reduces_to_anchor_step(self):
        theta = GpdParams(2.0, 0.1)
        state = SvrgdState.initial(theta, (0.1, 0.01))
        g = GradientPair(0.5, -0.2)
        out = svrgd_step(state, 1.0, g, max_sample=10.0)
        # theta == theta_avg so the two sample gradients cancel exactly
        assert out.theta.sigma == pytest.approx(2.0 - 0.1 * 0.5)
        assert out.theta.xi == pytest.approx(0.1 + 0.01 * 0.2)

    def test_zero_step_keeps_theta(self):
        state = SvrgdState.initial(GpdParams(2.0, 0.1), (0.0, 0.0))
        out = svrgd_step(state, 1.0, GradientPair(1.0, 1.0), 10.0)
        assert out.theta == GpdParams(2.0, 0.1)
        assert out.iteration == 2

    def test_running_average_invariant(self):
        state = SvrgdState.initial(GpdParams(2.0, 0.1), (0.05, 0.001))
        rng = np.random.default_rng(3)
        iterates = [state.theta.as_array()]
        for _ in range(10):
            state = svrgd_step(state, float(rng.uniform(0.5, 3)),
                               GradientPair(0.1, 0.1), 10.0)
            expected_avg = np.mean(iterates, axis=0)
            np.testing.assert_allclose(state.theta_avg.as_array(), expected_avg,
                                       rtol=1e-12)
            iterates.append(state.theta.as_array())

    def test_deterministic_trajectories(self):
        def run():
            state = SvrgdState.initial(GpdParams(1.0, 0.0), (0.05, 0.001))
            for _ in range(3):
                state = svrgd_step(state, 2.0, GradientPair(0.3, 0.1), 5.0)
            return state.theta
        assert run() == run()


class TestFit:
    def test_recovers_synthetic_parameters(self):
        rng = np.random.default_rng(2718)
        x = gpd_sample(GpdParams(1.0, 0.2), 5000, rng)
        theta, final_nll = fit_gpd_svrgd(x, n_rounds=400, seed=1)
        assert theta.sigma == pytest.approx(1.0, rel=0.05)
        assert theta.xi == pytest.approx(0.2, abs=0.05)
        assert abs(final_nll - nll(x, GpdParams(1.0, 0.2))) < 1e-3

    def test_estimator_api(self):
        rng = np.random.default_rng(99)
        x = gpd_sample(GpdParams(2.0, 0.1), 3000, rng)
        est = GpdTailEstimator(n_rounds=250, random_state=0)
        assert est.fit(x) is est
        assert est.sigma_ == pytest.approx(2.0, rel=0.1)
        assert est.xi_ == pytest.approx(0.1, abs=0.08)
        params = est.get_params()
        assert params["n_rounds"] == 250
        clone = GpdTailEstimator(**params)
        clone.fit(x)
        assert clone.sigma_ == est.sigma_ and clone.xi_ == est.xi_
        assert est.score(x) == pytest.approx(-est.nll_)
        assert est.score_samples(x[:5]).shape == (5,)
