# test/test_nls_fit.py
"""
Test suite for least-squares fitting and linear-approximation intervals
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from interval_service.src.core import expr_core as ec
from interval_service.src.core.errors import FitError
from interval_service.src.core.nls_fit import (fit, fit_with_fixed, free_correlation, linear_ci, linear_prediction,
                                               linear_prediction_band, summarize)
from interval_service.src.core.param_model import parameterize
from shared.models.data_models import Dataset, FitOptions


class TestLinearRegressionOracle:
    """A linear model must reproduce the closed-form least-squares results"""

    def setup_method(self):
        rng = np.random.default_rng(11)
        self.x = np.linspace(0.0, 5.0, 30)
        y = 1.5 + 0.8 * self.x + rng.normal(0.0, 0.3, self.x.size)
        self.data = Dataset(X=self.x.reshape(-1, 1), y=y, columns=['x0'])
        self.model = parameterize(ec.parse("1 + 1*x0"))

        A = np.column_stack([np.ones_like(self.x), self.x])
        self.A = A
        self.beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        residuals = y - A @ self.beta
        self.s2 = residuals @ residuals / (self.x.size - 2)
        self.cov = self.s2 * np.linalg.inv(A.T @ A)

    def test_estimates_and_standard_errors(self):
        result = fit(self.model, self.data)
        assert result.converged
        assert result.dof == 28
        np.testing.assert_allclose(result.theta_hat, self.beta, rtol=1e-8)
        assert result.s2 == pytest.approx(self.s2, rel=1e-8)
        np.testing.assert_allclose(result.se, np.sqrt(np.diag(self.cov)), rtol=1e-8)
        expected_corr = self.cov[0, 1] / np.sqrt(self.cov[0, 0] * self.cov[1, 1])
        assert result.corr[0, 1] == pytest.approx(expected_corr, rel=1e-8)
        assert result.corr[0, 0] == 1.0

    def test_gradient_vanishes_at_the_estimate(self):
        result = fit(self.model, self.data)
        assert np.max(np.abs(result.gradient)) < 1e-8

    def test_confidence_intervals(self):
        result = fit(self.model, self.data)
        t = stats.t.ppf(0.975, 28)
        for (lower, upper), beta, se in zip(linear_ci(result, 0.05), self.beta, np.sqrt(np.diag(self.cov))):
            assert lower == pytest.approx(beta - t * se, rel=1e-8)
            assert upper == pytest.approx(beta + t * se, rel=1e-8)

    def test_prediction_band_matches_closed_form(self):
        result = fit(self.model, self.data)
        X_new = np.array([[0.0], [2.5], [7.0]])
        t = stats.t.ppf(0.975, 28)
        a = np.column_stack([np.ones(3), X_new[:, 0]])
        rse = np.sqrt(np.einsum('ij,jk,ik->i', a, self.cov, a))
        center, lower, upper = linear_prediction_band(result, self.model, X_new, 0.05)
        np.testing.assert_allclose(center, a @ self.beta, rtol=1e-8)
        np.testing.assert_allclose(upper - center, t * rse, rtol=1e-8)
        np.testing.assert_allclose(center - lower, t * rse, rtol=1e-8)

        _, lower_full, upper_full = linear_prediction_band(result, self.model, X_new, 0.05, include_noise=True)
        np.testing.assert_allclose(upper_full - center, t * (rse + np.sqrt(self.s2)), rtol=1e-8)

    def test_single_point_prediction(self):
        result = fit(self.model, self.data)
        center, lower, upper = linear_prediction(result, self.model, [2.5], 0.05)
        band = linear_prediction_band(result, self.model, np.array([[2.5]]), 0.05)
        assert (center, lower, upper) == pytest.approx(tuple(float(v[0]) for v in band))


class TestFitting:

    def setup_method(self):
        rng = np.random.default_rng(5)
        x = np.linspace(0.0, 4.0, 40)
        self.data = Dataset(X=x.reshape(-1, 1), y=2.0 * np.exp(-0.7 * x) + rng.normal(0.0, 0.02, x.size),
                            columns=['x0'])
        self.model = parameterize(ec.parse("1*exp(-1*x0)"))

    def test_exponential_decay(self):
        result = fit(self.model, self.data)
        assert result.converged
        np.testing.assert_allclose(result.theta_hat, [2.0, -0.7], rtol=0.05)

    def test_far_start_reaches_the_same_optimum(self):
        near = fit(self.model, self.data)
        far = fit(self.model, self.data, theta_start=[10.0, -0.1])
        np.testing.assert_allclose(far.theta_hat, near.theta_hat, rtol=1e-6)

    def test_iteration_limit_reports_non_convergence(self):
        result = fit(self.model, self.data, theta_start=[10.0, -3.0], options=FitOptions(max_iters=1))
        assert not result.converged
        assert result.iterations == 1

    def test_too_few_observations(self):
        data = Dataset(X=np.array([[0.0], [1.0]]), y=np.array([1.0, 2.0]), columns=['x0'])
        with pytest.raises(FitError):
            fit(self.model, data)

    def test_bad_start_vector(self):
        with pytest.raises(FitError):
            fit(self.model, self.data, theta_start=[1.0])
        with pytest.raises(FitError):
            fit(self.model, self.data, theta_start=[np.nan, 1.0])

    def test_non_finite_start_objective(self):
        model = parameterize(ec.parse("log(1*x0 - 1)"))
        with pytest.raises(FitError, match="not finite"):
            fit(model, self.data)

    def test_summarize_matches_fit_statistics(self):
        result = fit(self.model, self.data)
        again = summarize(self.model, self.data, result.theta_hat, result.converged, result.iterations)
        assert again.ssr == pytest.approx(result.ssr)
        np.testing.assert_allclose(again.se, result.se)


class TestConditionalFit:

    def setup_method(self):
        rng = np.random.default_rng(9)
        x = np.linspace(0.0, 4.0, 40)
        self.data = Dataset(X=x.reshape(-1, 1), y=2.0 * np.exp(-0.7 * x) + rng.normal(0.0, 0.02, x.size),
                            columns=['x0'])
        self.model = parameterize(ec.parse("1*exp(-1*x0)"))
        self.result = fit(self.model, self.data)

    def test_fixing_the_estimate_reproduces_the_minimum(self):
        conditional = fit_with_fixed(self.model, self.data, self.result.theta_hat, 1,
                                     float(self.result.theta_hat[1]))
        assert conditional.ssr == pytest.approx(self.result.ssr, rel=1e-9)
        assert conditional.theta[1] == self.result.theta_hat[1]

    def test_fixed_value_raises_the_minimum(self):
        value = float(self.result.theta_hat[1]) + 0.1
        conditional = fit_with_fixed(self.model, self.data, self.result.theta_hat, 1, value)
        assert conditional.converged
        assert conditional.theta[1] == value
        assert conditional.ssr > self.result.ssr

    def test_single_parameter_model_returns_ssr_directly(self):
        model = parameterize(ec.parse("exp(-0.5*x0)"))
        conditional = fit_with_fixed(model, self.data, [-0.5], 0, -0.6)
        residuals = self.data.y - np.exp(-0.6 * self.data.X[:, 0])
        assert conditional.ssr == pytest.approx(residuals @ residuals)
        assert conditional.iterations == 0

    def test_index_out_of_range(self):
        with pytest.raises(FitError):
            fit_with_fixed(self.model, self.data, self.result.theta_hat, 2, 0.0)


class TestFreeCorrelation:
    """Correlation of the parameters left free when one is held fixed"""

    def setup_method(self):
        self.x = np.linspace(100.0, 101.0, 11)

    def test_matches_the_correlation_of_the_free_columns(self):
        J = np.column_stack([np.ones_like(self.x), self.x, np.linspace(-1.0, 1.0, 11) ** 2])
        free = J[:, [1, 2]]
        expected = np.linalg.inv(free.T @ free)
        expected = abs(expected[0, 1]) / np.sqrt(expected[0, 0] * expected[1, 1])
        assert free_correlation(J, 0) == pytest.approx(expected, rel=1e-9)

    def test_nearly_collinear_free_columns(self):
        J = np.column_stack([np.linspace(-1.0, 1.0, 11), np.ones_like(self.x), self.x])
        assert free_correlation(J, 0) > 0.999
        assert free_correlation(J, 2) == pytest.approx(0.0, abs=1e-12)

    def test_one_free_parameter_has_nothing_to_correlate(self):
        J = np.column_stack([np.ones_like(self.x), self.x])
        assert free_correlation(J, 1) == 0.0

    def test_rank_deficient_or_non_finite_columns(self):
        J = np.column_stack([np.ones_like(self.x), self.x, 2.0 * self.x])
        assert free_correlation(J, 0) == np.inf
        J = np.column_stack([np.ones_like(self.x), self.x, self.x ** 2])
        J[3, 2] = np.nan
        assert free_correlation(J, 0) == np.inf


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
