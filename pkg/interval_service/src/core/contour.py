"""
Approximate pairwise confidence regions built from two likelihood profiles
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import ContourUnavailable, InsufficientKnotsError
from .nls_fit import FitResult
from .numerics import Spline, f_quantile, make_periodic_spline_or_linear, make_spline_or_linear
from .profile import ProfileTrace

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 100


@dataclass
class ContourCurve:
    """Closed polyline of (theta_i, theta_j) points around the estimate"""
    i: int
    j: int
    alpha: float
    points: np.ndarray
    tau_scale: float
    taus: np.ndarray = field(repr=False, default=None)
    extrapolated: bool = False
    degraded: bool = False

    @property
    def steps(self) -> int:
        return int(self.points.shape[0])


@dataclass
class AngleSpline:
    """g_ij as a function of tau_j / tau_scale"""
    spline: Spline
    extrapolated: bool

    def __call__(self, u):
        return self.spline(u)


def tau_scale(p: int, dof: int, alpha: float) -> float:
    return math.sqrt(p * f_quantile(1.0 - alpha, p, dof))


def _core_rows(trace: ProfileTrace) -> slice:
    lo, hi = trace.core
    return slice(lo, hi + 1)


def prepare_spline(i: int, j: int, traces: Dict[int, ProfileTrace], scale: float) -> AngleSpline:
    """Spline of arccos(tau_i(theta_i along trace j) / scale) against tau_j / scale"""
    if i not in traces or j not in traces:
        raise ContourUnavailable("MISSING_TRACE", f"no profile for theta[{i if i not in traces else j}]")
    trace_i, trace_j = traces[i], traces[j]
    rows = _core_rows(trace_j)
    taus_j = trace_j.taus[rows]
    theta_i_along_j = trace_j.thetas[rows, i]

    if taus_j.size < 3 and (np.all(taus_j >= 0) or np.all(taus_j <= 0)):
        raise ContourUnavailable("DEGENERATE_TRACE", f"trace of theta[{j}] has too few points")

    theta_to_tau = trace_i.spline_theta_to_tau
    lo, hi = theta_to_tau.domain
    extrapolated = bool(np.any(theta_i_along_j < lo) or np.any(theta_i_along_j > hi))
    ratio = np.asarray(theta_to_tau(theta_i_along_j), dtype=float) / scale
    g = np.arccos(np.clip(ratio, -1.0, 1.0))
    try:
        spline = make_spline_or_linear(taus_j / scale, g)
    except InsufficientKnotsError as e:
        raise ContourUnavailable("DEGENERATE_TRACE", str(e))
    return AngleSpline(spline, extrapolated)


def _check_reach(trace: ProfileTrace, scale: float) -> None:
    """Both sides of the sampled core must reach +/- scale"""
    for side in (-1, +1):
        if trace.spline_tau_to_theta.contains(side * scale):
            continue
        name = "lower" if side < 0 else "upper"
        if not trace.bounded(side):
            raise ContourUnavailable(
                "UNBOUNDED_PROFILE", f"profile of theta[{trace.index}] is unbounded on the {name} side")
        raise ContourUnavailable(
            "BEYOND_SAMPLING", f"profile of theta[{trace.index}] stops at tau_max={trace.tau_max:.4g} "
                               f"on the {name} side, below tau={scale:.4g}")


def _normalized(angle: Tuple[float, float]) -> Tuple[float, float]:
    a = (angle[0] + angle[1]) / 2.0
    d = angle[0] - angle[1]
    sign = -1.0 if d < 0 else 1.0
    return sign * a, sign * d


def profile_contour(i: int, j: int, traces: Dict[int, ProfileTrace], fit: FitResult, alpha: float,
                    steps: int = DEFAULT_STEPS) -> ContourCurve:
    """Contour of the approximate (1 - alpha) joint region of theta_i and theta_j"""
    if i == j:
        raise ContourUnavailable("SAME_PARAMETER", f"pair ({i}, {j}) needs two distinct parameters")
    if steps < 3:
        raise ValueError(f"steps must be at least 3, got {steps}")
    scale = tau_scale(fit.p, fit.dof, alpha)
    for k in (i, j):
        if k not in traces:
            raise ContourUnavailable("MISSING_TRACE", f"no profile for theta[{k}]")
    _check_reach(traces[i], scale)
    _check_reach(traces[j], scale)

    g_ij = prepare_spline(i, j, traces, scale)
    g_ji = prepare_spline(j, i, traces, scale)
    extrapolated = g_ij.extrapolated or g_ji.extrapolated

    # (angle of tau_i, angle of tau_j) where each trace hits +/- scale
    anchors = [
        (0.0, float(g_ji(1.0))),
        (float(g_ij(1.0)), 0.0),
        (math.pi, float(g_ji(-1.0))),
        (float(g_ij(-1.0)), math.pi),
    ]
    a, d = zip(*(_normalized(angle) for angle in anchors))
    order = np.argsort(a)
    a = np.asarray(a)[order]
    d = np.asarray(d)[order]
    a_to_d = make_periodic_spline_or_linear(np.append(a, a[0] + 2.0 * math.pi), np.append(d, d[0]))

    x = np.linspace(-math.pi, math.pi, steps)
    y = np.asarray(a_to_d(x), dtype=float)
    tau_i = np.cos(x + y / 2.0) * scale
    tau_j = np.cos(x - y / 2.0) * scale
    theta_i = np.asarray(traces[i].spline_tau_to_theta(tau_i), dtype=float)
    theta_j = np.asarray(traces[j].spline_tau_to_theta(tau_j), dtype=float)

    degraded = a_to_d.degraded or g_ij.spline.degraded or g_ji.spline.degraded
    if extrapolated:
        logger.warning(f"Contour ({i}, {j}) at alpha={alpha} extrapolates beyond the sampled profiles")
    return ContourCurve(i=i, j=j, alpha=alpha, points=np.column_stack([theta_i, theta_j]),
                        tau_scale=scale, taus=np.column_stack([tau_i, tau_j]),
                        extrapolated=bool(extrapolated), degraded=bool(degraded))
