# test/test_contour.py
"""
Test suite for pairwise confidence contours
"""

import itertools
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from interval_service.src.core import expr_core as ec
from interval_service.src.core.contour import prepare_spline, profile_contour, tau_scale
from interval_service.src.core.errors import ContourUnavailable
from interval_service.src.core.nls_fit import fit
from interval_service.src.core.numerics import make_spline_or_linear
from interval_service.src.core.param_model import parameterize
from interval_service.src.core.profile import profile_all
from shared.models.data_models import Dataset


class TestLinearModelContour:
    """On a linear model the contour is the exact joint ellipse"""

    def setup_method(self):
        rng = np.random.default_rng(17)
        x = np.linspace(-1.0, 2.5, 25)
        y = 0.3 + 0.9 * x + rng.normal(0.0, 0.25, x.size)
        self.data = Dataset(X=x.reshape(-1, 1), y=y, columns=['x0'])
        self.model = parameterize(ec.parse("1 + 1*x0"))
        self.fit = fit(self.model, self.data)
        self.run = profile_all(self.model, self.data, self.fit, max_workers=2)

    def radius(self, points):
        """sqrt of the standardized quadratic form at each contour point"""
        z = (points - self.fit.theta_hat) / self.fit.se
        inverse = np.linalg.inv(self.fit.corr)
        return np.sqrt(np.einsum('ij,jk,ik->i', z, inverse, z))

    def test_tau_scale(self):
        expected = math.sqrt(2 * stats.f.ppf(0.95, 2, 23))
        assert tau_scale(2, 23, 0.05) == pytest.approx(expected, rel=1e-9)

    def test_matches_the_ellipse(self):
        for alpha in (0.2, 0.5):
            curve = profile_contour(0, 1, self.run.traces, self.fit, alpha)
            assert curve.steps == 100
            assert not curve.extrapolated
            radial_error = np.abs(self.radius(curve.points) / curve.tau_scale - 1.0)
            assert radial_error.max() < 0.02, alpha

    def test_curve_is_closed(self):
        curve = profile_contour(0, 1, self.run.traces, self.fit, 0.2)
        np.testing.assert_allclose(curve.points[0], curve.points[-1], rtol=1e-9, atol=1e-12)
        assert np.all(np.isfinite(curve.points))

    def test_smaller_alpha_gives_larger_region(self):
        inner = profile_contour(0, 1, self.run.traces, self.fit, 0.5)
        outer = profile_contour(0, 1, self.run.traces, self.fit, 0.2)
        assert np.ptp(outer.points[:, 0]) > np.ptp(inner.points[:, 0])
        assert np.ptp(outer.points[:, 1]) > np.ptp(inner.points[:, 1])

    def test_same_parameter(self):
        with pytest.raises(ContourUnavailable) as info:
            profile_contour(1, 1, self.run.traces, self.fit, 0.2)
        assert info.value.reason == "SAME_PARAMETER"

    def test_missing_trace(self):
        with pytest.raises(ContourUnavailable) as info:
            profile_contour(0, 1, {0: self.run.traces[0]}, self.fit, 0.2)
        assert info.value.reason == "MISSING_TRACE"

    def shortened(self, bounded_right):
        """Trace of theta[0] whose upper side stops two points past the estimate"""
        trace = self.run.traces[0]
        anchor = int(np.argmin(np.abs(trace.taus)))
        lo, hi = trace.core[0], anchor + 2
        rows = slice(lo, hi + 1)
        return replace(trace, bounded_right=bounded_right, core=(lo, hi),
                       spline_tau_to_theta=make_spline_or_linear(trace.taus[rows], trace.thetas[rows, 0]),
                       spline_theta_to_tau=make_spline_or_linear(trace.thetas[rows, 0], trace.taus[rows]))

    def test_unbounded_profile(self):
        with pytest.raises(ContourUnavailable) as info:
            profile_contour(0, 1, {0: self.shortened(False), 1: self.run.traces[1]}, self.fit, 0.2)
        assert info.value.reason == "UNBOUNDED_PROFILE"

    def test_profile_sampled_short_of_the_scale(self):
        with pytest.raises(ContourUnavailable) as info:
            profile_contour(0, 1, {0: self.shortened(True), 1: self.run.traces[1]}, self.fit, 0.2)
        assert info.value.reason == "BEYOND_SAMPLING"

    def test_swapping_the_pair_gives_the_same_curve(self):
        curve = profile_contour(0, 1, self.run.traces, self.fit, 0.2)
        swapped = profile_contour(1, 0, self.run.traces, self.fit, 0.2)
        mirrored = swapped.points[:, ::-1]
        gaps = np.linalg.norm((mirrored[:, None, :] - curve.points[None, :, :]) / self.fit.se, axis=2)
        assert gaps.min(axis=1).max() < 1e-6

    def test_taus_stay_inside_the_scaled_square(self):
        for alpha in (0.05, 0.2, 0.5):
            curve = profile_contour(0, 1, self.run.traces, self.fit, alpha)
            assert np.all(np.abs(curve.taus) <= curve.tau_scale * (1.0 + 1e-12))
            assert np.all(np.sum(curve.taus ** 2, axis=1) <= 2.0 * curve.tau_scale ** 2 * (1.0 + 1e-12))

    def test_too_few_steps(self):
        with pytest.raises(ValueError):
            profile_contour(0, 1, self.run.traces, self.fit, 0.2, steps=2)


class TestThreeParameterContours:

    def setup_method(self):
        rng = np.random.default_rng(23)
        X = rng.uniform(0.0, 3.0, size=(40, 2))
        y = 1.0 + 0.5 * X[:, 0] - 0.8 * X[:, 1] + rng.normal(0.0, 0.1, 40)
        self.data = Dataset(X=X, y=y, columns=['x0', 'x1'])
        self.model = parameterize(ec.parse("1 + 1*x0 + 1*x1"))
        self.fit = fit(self.model, self.data)
        self.run = profile_all(self.model, self.data, self.fit, max_workers=3)

    def test_every_pair_has_a_contour(self):
        curves = [profile_contour(i, j, self.run.traces, self.fit, 0.2, steps=60)
                  for i, j in itertools.combinations(range(3), 2)]
        assert len(curves) == 3
        for curve in curves:
            assert curve.points.shape == (60, 2)
            assert np.all(np.isfinite(curve.points))
            # the estimate lies inside the region
            lo, hi = curve.points.min(axis=0), curve.points.max(axis=0)
            theta_hat = self.fit.theta_hat[[curve.i, curve.j]]
            assert np.all(lo < theta_hat) and np.all(theta_hat < hi)


class TestAngleSpline:

    def profiles(self, x):
        rng = np.random.default_rng(31)
        y = 0.4 + 1.1 * x + rng.normal(0.0, 0.2, x.size)
        data = Dataset(X=x.reshape(-1, 1), y=y, columns=['x0'])
        model = parameterize(ec.parse("1 + 1*x0"))
        result = fit(model, data)
        return profile_all(model, data, result, max_workers=2).traces

    def test_orthogonal_parameters_give_a_right_angle(self):
        traces = self.profiles(np.linspace(-1.0, 1.0, 21))
        scale = tau_scale(2, 19, 0.1)
        for i, j in ((0, 1), (1, 0)):
            g = prepare_spline(i, j, traces, scale)
            u = np.linspace(-1.0, 1.0, 41)
            np.testing.assert_allclose(g(u), math.pi / 2.0, atol=1e-5)

    def test_ratios_past_one_are_clamped(self):
        traces = self.profiles(np.linspace(2.0, 4.0, 21))
        g = prepare_spline(0, 1, traces, 0.1)
        assert np.all(np.isfinite(g.spline.values))
        assert g.spline.values.min() == 0.0
        assert g.spline.values.max() == pytest.approx(math.pi)
        lo, hi = g.spline.domain
        assert np.all(np.isfinite(g(np.linspace(lo, hi, 200))))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
