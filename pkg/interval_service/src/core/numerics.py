"""
Quantiles of the t and F distributions and cubic-spline interpolation
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate, special

from .errors import InsufficientKnotsError, QuantileError, SplineError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEDUP_TOLERANCE = 1e-12


# ---------------------------------------------------------------------------
# Quantiles
# ---------------------------------------------------------------------------

def _check_probability(prob: float, name: str = "probability") -> None:
    if not (0.0 < prob < 1.0) or not math.isfinite(prob):
        raise QuantileError(f"{name} must lie in (0, 1), got {prob}")


def _check_df(df: float, name: str = "df") -> None:
    if not math.isfinite(df) or df <= 0:
        raise QuantileError(f"{name} must be positive, got {df}")


def t_upper_tail(df: float, t: float) -> float:
    """P(T > t) for Student's t with df degrees of freedom"""
    tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(tail if t >= 0 else 1.0 - tail)


def t_density(df: float, t: float) -> float:
    log_pdf = (special.gammaln((df + 1.0) / 2.0) - special.gammaln(df / 2.0)
               - 0.5 * math.log(df * math.pi) - (df + 1.0) / 2.0 * math.log1p(t * t / df))
    return math.exp(log_pdf)


def t_quantile(df: float, upper_tail_prob: float) -> float:
    """t such that P(T > t) = upper_tail_prob.

    Inverts the regularized incomplete beta function and polishes the result
    with Newton steps on the tail probability.
    """
    _check_df(df)
    _check_probability(upper_tail_prob, "upper_tail_prob")
    if upper_tail_prob == 0.5:
        return 0.0
    if upper_tail_prob > 0.5:
        return -t_quantile(df, 1.0 - upper_tail_prob)

    x = float(special.betaincinv(df / 2.0, 0.5, 2.0 * upper_tail_prob))
    if x <= 0.0:
        return math.inf
    t = math.sqrt(df * (1.0 - x) / x)
    for _ in range(5):
        density = t_density(df, t)
        if density <= 0.0 or not math.isfinite(density):
            break
        delta = (t_upper_tail(df, t) - upper_tail_prob) / density
        t += delta
        if abs(delta) <= 1e-15 * max(1.0, abs(t)):
            break
    return t


def f_cdf(q: float, df1: float, df2: float) -> float:
    """P(F <= q) for the F distribution with (df1, df2) degrees of freedom"""
    if q <= 0:
        return 0.0
    return float(special.betainc(df1 / 2.0, df2 / 2.0, df1 * q / (df1 * q + df2)))


def f_quantile(prob: float, df1: float, df2: float) -> float:
    """q such that P(F <= q) = prob"""
    _check_probability(prob)
    _check_df(df1, "df1")
    _check_df(df2, "df2")
    x = float(special.betaincinv(df1 / 2.0, df2 / 2.0, prob))
    if x >= 1.0:
        return math.inf
    return df2 * x / (df1 * (1.0 - x))


def profile_tau_max(level: float, p: int, dof: int) -> float:
    """Profile sampling cut-off sqrt(F(1 - level, p, n - p))"""
    return math.sqrt(f_quantile(1.0 - level, p, dof))


def profile_reach(level: float, p: int, dof: int, alphas: Sequence[float] = ()) -> float:
    """|tau| a profile has to sample: the cut-off, the two-sided t quantile at
    level, and the interval quantile of every requested alpha"""
    levels = [profile_tau_max(level, p, dof), t_quantile(dof, level / 2.0)]
    levels.extend(t_quantile(dof, alpha / 2.0) for alpha in alphas)
    return max(levels)


# ---------------------------------------------------------------------------
# Splines
# ---------------------------------------------------------------------------

def _sorted_unique(xs: Sequence[float], ys: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if xs.shape != ys.shape:
        raise SplineError(f"xs has {xs.size} entries but ys has {ys.size}")
    keep = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = xs[keep], ys[keep]
    order = np.argsort(xs, kind="mergesort")
    xs, ys = xs[order], ys[order]
    if xs.size == 0:
        return xs, ys
    unique = np.concatenate([[True], np.diff(xs) > DEDUP_TOLERANCE])
    return xs[unique], ys[unique]


class Spline:
    """Interpolant through (x, y) knots.

    Natural cubic by default; degraded instances interpolate linearly and
    are only built when fewer than 3 distinct knots exist.
    """

    def __init__(self, xs: np.ndarray, ys: np.ndarray, degraded: bool = False):
        self.knots = xs
        self.values = ys
        self.degraded = degraded
        if degraded:
            self._ppoly = None
        else:
            self._ppoly = interpolate.CubicSpline(xs, ys, bc_type="natural", extrapolate=True)

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def contains(self, x: float) -> bool:
        lo, hi = self.domain
        return lo <= x <= hi

    def __call__(self, x):
        if self.degraded:
            result = self._linear(np.asarray(x, dtype=float))
        else:
            result = self._ppoly(np.asarray(x, dtype=float))
        return float(result) if np.ndim(result) == 0 else result

    def _linear(self, x: np.ndarray) -> np.ndarray:
        xs, ys = self.knots, self.values
        if xs.size == 1:
            return np.full_like(x, ys[0], dtype=float)
        inside = np.interp(x, xs, ys)
        left_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        right_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        result = np.where(x < xs[0], ys[0] + left_slope * (x - xs[0]), inside)
        return np.where(x > xs[-1], ys[-1] + right_slope * (x - xs[-1]), result)


class PeriodicSpline:
    """Periodic interpolant with period 2*pi"""

    def __init__(self, xs: np.ndarray, ys: np.ndarray, degraded: bool = False):
        self.knots = xs
        self.values = ys
        self.degraded = degraded
        self._start = float(xs[0])
        if degraded:
            self._ppoly = None
        else:
            self._ppoly = interpolate.CubicSpline(xs, ys, bc_type="periodic", extrapolate="periodic")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.degraded:
            result = np.interp(x, self.knots[:-1], self.values[:-1], period=TWO_PI)
        else:
            result = self._ppoly(x)
        return float(result) if np.ndim(result) == 0 else result


def make_spline(xs: Sequence[float], ys: Sequence[float]) -> Spline:
    """Natural cubic spline; raises InsufficientKnotsError below 3 distinct knots"""
    knots, values = _sorted_unique(xs, ys)
    if knots.size < 3:
        raise InsufficientKnotsError(int(knots.size))
    return Spline(knots, values)


def make_spline_or_linear(xs: Sequence[float], ys: Sequence[float]) -> Spline:
    """As make_spline, degrading to linear interpolation when knots are scarce"""
    knots, values = _sorted_unique(xs, ys)
    if knots.size >= 3:
        return Spline(knots, values)
    if knots.size == 0:
        raise InsufficientKnotsError(0)
    logger.warning(f"Only {knots.size} distinct knots, using linear interpolation")
    return Spline(knots, values, degraded=True)


def _periodic_knots(angles: Sequence[float], values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    xs, ys = _sorted_unique(angles, values)
    if xs.size == 0:
        raise InsufficientKnotsError(0)
    if xs[-1] - xs[0] >= TWO_PI - DEDUP_TOLERANCE:
        # caller supplied the wrap point already
        xs, ys = xs[:-1], ys[:-1]
        keep = xs < xs[0] + TWO_PI - DEDUP_TOLERANCE
        xs, ys = xs[keep], ys[keep]
    return np.append(xs, xs[0] + TWO_PI), np.append(ys, ys[0])


def make_periodic_spline(angles: Sequence[float], values: Sequence[float]) -> PeriodicSpline:
    """Periodic cubic spline through the given points (period 2*pi).

    The wrap point (a_0 + 2*pi, v_0) is appended when missing.
    """
    xs, ys = _periodic_knots(angles, values)
    if xs.size - 1 < 3:
        raise InsufficientKnotsError(int(xs.size - 1))
    return PeriodicSpline(xs, ys)


def make_periodic_spline_or_linear(angles: Sequence[float], values: Sequence[float]) -> PeriodicSpline:
    xs, ys = _periodic_knots(angles, values)
    if xs.size - 1 >= 3:
        return PeriodicSpline(xs, ys)
    logger.warning(f"Only {xs.size - 1} distinct angles, using periodic linear interpolation")
    return PeriodicSpline(xs, ys, degraded=True)
