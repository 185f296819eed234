# test/test_param_model.py
"""
Test suite for literal parameterization, identifiability checks and re-parameterization
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from interval_service.src.core import expr_core as ec
from interval_service.src.core.errors import ExprError, ReparameterizationError
from interval_service.src.core.nls_fit import fit, summarize
from interval_service.src.core.param_model import (ParamModel, check_identifiability, mul_add_pattern,
                                                   parameterize, reparameterize)
from shared.models.data_models import Dataset


class TestParameterize:

    def test_pcb_model(self):
        model = parameterize(ec.parse("-3.93*exp(-0.19*age) + 3.13", ["age"]), ["age"])
        assert model.to_string() == "theta[0]*exp(theta[1]*age) + theta[2]"
        np.testing.assert_array_equal(model.theta0, [-3.93, -0.19, 3.13])
        assert model.n_params == 3
        assert model.fixed_constants == ()

    def test_scale_of_a_parameterized_sum_stays_fixed(self):
        expr = ec.parse("2*(3*x0 + 4)")
        assert mul_add_pattern(expr)
        model = parameterize(expr)
        assert model.to_string() == "2*(theta[0]*x0 + theta[1])"
        np.testing.assert_array_equal(model.theta0, [3.0, 4.0])
        assert model.fixed_constants == ((0, 2.0),)

    def test_sum_without_literal_scales_is_not_the_pattern(self):
        model = parameterize(ec.parse("2*(x0 + 4)"))
        assert model.n_params == 2
        assert model.fixed_constants == ()

    def test_integer_exponents_are_structural(self):
        model = parameterize(ec.parse("2.5*x0^2 + x0^1.5"))
        assert model.to_string() == "theta[0]*x0^2 + x0^theta[1]"
        np.testing.assert_array_equal(model.theta0, [2.5, 1.5])

    def test_literal_positions_count_exponents(self):
        model = parameterize(ec.parse("x0^2 + 2*(3*x0 + 1)"))
        assert model.fixed_constants == ((1, 2.0),)
        np.testing.assert_array_equal(model.theta0, [3.0, 1.0])

    def test_zero_parameter_model(self):
        model = parameterize(ec.parse("x0^2"))
        assert model.is_zero_parameter
        np.testing.assert_allclose(model.predict([], np.array([[3.0]])), [9.0])

    def test_rejects_expressions_with_parameters(self):
        with pytest.raises(ExprError):
            parameterize(ec.parse("t0*x0 + 1"))

    def test_parameter_indices_must_be_contiguous(self):
        with pytest.raises(ExprError):
            ParamModel(ec.parse("t1*x0"), np.array([1.0]), 1)

    def test_substituted_expression_matches_prediction(self):
        model = parameterize(ec.parse("-3.93*exp(-0.19*age) + 3.13", ["age"]), ["age"])
        X = np.array([[1.0], [5.0], [12.0]])
        values = ec.evaluate_batch(model.substituted(), [], X)
        np.testing.assert_allclose(values, model.predict(model.theta0, X))


class TestIdentifiability:

    def setup_method(self):
        rng = np.random.default_rng(3)
        x = np.linspace(0.0, 2.0, 25)
        self.data = Dataset(X=x.reshape(-1, 1), y=3.0 * np.exp(x) + rng.normal(0.0, 0.05, x.size), columns=['x0'])

    def test_redundant_parameters_are_rank_deficient(self):
        model = parameterize(ec.parse("1*exp(x0 + 0.5)"))
        result = fit(model, self.data)
        report = check_identifiability(model, self.data, result)
        assert report.rank_deficient
        assert report.error == "rank-deficient Jacobian: model over-parameterized"
        assert report.deficient_params == [0, 1]
        assert np.all(np.isinf(result.se))

    def test_well_posed_model_passes(self):
        model = parameterize(ec.parse("1*exp(0.9*x0)"))
        report = check_identifiability(model, self.data)
        assert not report.suspicious
        assert report.zero_estimates == []

    def test_strong_correlation_without_rank_deficiency(self):
        x = np.linspace(100.0, 101.0, 15)
        rng = np.random.default_rng(5)
        data = Dataset(X=x.reshape(-1, 1), y=1.0 + 0.5 * x + rng.normal(0.0, 0.01, x.size), columns=['x0'])
        model = parameterize(ec.parse("1 + 1*x0"))
        A = np.column_stack([np.ones_like(x), x])
        theta, *_ = np.linalg.lstsq(A, data.y, rcond=None)
        report = check_identifiability(model, data, summarize(model, data, theta))
        assert not report.rank_deficient
        assert [(j, i) for j, i, _ in report.high_correlation] == [(0, 1)]
        assert report.high_correlation[0][2] < -0.999
        assert report.suspicious

    def test_estimate_small_against_its_standard_error(self):
        x = np.linspace(-1.0, 1.0, 21)
        A = np.column_stack([np.ones_like(x), x ** 2, x])
        noise = np.random.default_rng(9).normal(0.0, 0.01, x.size)
        noise -= A @ np.linalg.lstsq(A, noise, rcond=None)[0]
        data = Dataset(X=x.reshape(-1, 1), y=A @ [2.0, 0.1, 1e-7] + noise, columns=['x0'])
        model = parameterize(ec.parse("1 + 1*x0^2 + 1*x0"))
        theta, *_ = np.linalg.lstsq(A, data.y, rcond=None)
        np.testing.assert_allclose(theta, [2.0, 0.1, 1e-7], atol=1e-12)
        report = check_identifiability(model, data, summarize(model, data, theta))
        assert report.large_relative_se == [2]
        assert report.high_correlation == []
        assert not report.rank_deficient


class TestReparameterize:

    def setup_method(self):
        self.pcb = parameterize(ec.parse("-3.93*exp(-0.19*age) + 3.13", ["age"]), ["age"])
        self.theta = np.array([-4.86, -0.2675, 3.1])

    def test_pivot_is_the_shallowest_pure_parameter(self):
        rep = reparameterize(self.pcb, self.theta, [5.0])
        assert rep.pivot_parameter == 2
        y0 = self.pcb.predict(self.theta, np.array([[5.0]]))[0]
        assert rep.theta_prime0[2] == pytest.approx(y0)

    def test_model_is_unchanged_as_a_function(self):
        rep = reparameterize(self.pcb, self.theta, [5.0])
        X = np.linspace(1.0, 12.0, 7).reshape(-1, 1)
        np.testing.assert_allclose(rep.model.predict(rep.theta_prime0, X), self.pcb.predict(self.theta, X),
                                   rtol=1e-12)
        np.testing.assert_allclose(rep.base_theta(rep.theta_prime0), self.theta, rtol=1e-12)

    def test_inverts_through_exp(self):
        model = parameterize(ec.parse("exp(0.5*x0)"))
        rep = reparameterize(model, [0.5], [2.0])
        assert rep.theta_prime0[0] == pytest.approx(math.e)
        assert rep.model.predict(rep.theta_prime0, np.array([[4.0]]))[0] == pytest.approx(math.e ** 2)

    def test_no_extractable_parameter(self):
        with pytest.raises(ReparameterizationError, match="no extractable parameter"):
            reparameterize(parameterize(ec.parse("sin(2*x0)")), [2.0], [1.0])

    def test_uninformative_anchor_is_rejected(self):
        model = parameterize(ec.parse("exp(0.5*x0)"))
        with pytest.raises(ReparameterizationError):
            reparameterize(model, [0.5], [0.0])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
