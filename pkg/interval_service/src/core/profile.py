"""
Likelihood profiles: per-parameter tau traces, profile confidence intervals
and profile-based prediction intervals
"""
import logging
import math
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.models.data_models import Dataset, FitOptions, ProfileOptions
from .errors import (
    FitError,
    InsufficientKnotsError,
    NonMonotoneProfileError,
    ProfileError,
    ProfileRestart,
    ReparameterizationError,
    RestartLimitExceeded,
)
from .nls_fit import FitResult, fit as run_fit, fit_with_fixed, free_correlation, summarize
from .numerics import Spline, make_spline_or_linear, profile_reach, t_quantile
from .param_model import HIGH_CORRELATION, ParamModel, reparameterize

logger = logging.getLogger(__name__)

MIN_INV_SLOPE = 1.0 / 16.0
MAX_INV_SLOPE = 4.0
TAU_NOISE = 1e-6


class ProfileCancelled(Exception):
    """Raised inside a worker when the surrounding run was cancelled"""


@dataclass
class ProfileTrace:
    """Sampled likelihood profile of one parameter.

    Points are ordered by theta_i; the splines are built over the monotone
    core around the anchor (tau = 0 at theta_hat).
    """
    index: int
    taus: np.ndarray
    thetas: np.ndarray
    theta_hat: float
    se: float
    tau_max: float
    bounded_left: bool
    bounded_right: bool
    truncated_left: bool = False
    truncated_right: bool = False
    degenerate_left: bool = False
    degenerate_right: bool = False
    non_monotone: bool = False
    noise_skipped: int = 0
    core: Tuple[int, int] = (0, 0)
    restarts: int = 0
    spline_tau_to_theta: Optional[Spline] = field(default=None, repr=False)
    spline_theta_to_tau: Optional[Spline] = field(default=None, repr=False)

    @property
    def theta_i(self) -> np.ndarray:
        return self.thetas[:, self.index]

    @property
    def tau_linear(self) -> np.ndarray:
        """Linear-approximation reference (theta_i - theta_hat_i) / se_i"""
        return (self.theta_i - self.theta_hat) / self.se

    @property
    def degraded(self) -> bool:
        return bool(self.spline_tau_to_theta is not None and self.spline_tau_to_theta.degraded)

    @property
    def core_taus(self) -> np.ndarray:
        lo, hi = self.core
        return self.taus[lo:hi + 1]

    def bounded(self, side: int) -> bool:
        return self.bounded_right if side > 0 else self.bounded_left


@dataclass
class ProfileInterval:
    """Inverted profile; beyond_sampling marks a side left infinite because
    the trace stopped at its cut-off below the requested level"""
    lower: float
    upper: float
    bounded_lower: bool = True
    bounded_upper: bool = True
    beyond_sampling: bool = False


def _inv_slope(tau: float, s2: float, se: float, eps_j: float) -> float:
    if abs(eps_j) < 1e-300:
        return MAX_INV_SLOPE
    return min(MAX_INV_SLOPE, max(abs(tau * s2 / (se * eps_j)), MIN_INV_SLOPE))


@dataclass
class _Side:
    """Samples on one side of the anchor and how the walk ended"""
    points: List[Tuple[float, np.ndarray]]
    bounded: bool = False
    truncated: bool = False
    degenerate: bool = False


def _sample_direction(model: ParamModel, data: Dataset, fit: FitResult, i: int, direction: int,
                      opts: ProfileOptions, tau_max: float, fit_options: Optional[FitOptions],
                      cancel: Optional[threading.Event], watch_degeneracy: bool = True) -> _Side:
    """Walk theta_i away from the estimate until |tau| passes tau_max.

    The walk also ends, unbounded, when the free parameters stop being
    identifiable; that point is not kept.
    """
    se = float(fit.se[i])
    delta = direction * se / opts.step
    theta_hat_i = float(fit.theta_hat[i])
    restart_threshold = fit.ssr - 1e-10 * (1.0 + fit.ssr)
    theta_tilde = fit.theta_hat.copy()
    t = 1.0
    points: List[Tuple[float, np.ndarray]] = []

    for _ in range(opts.k_max):
        if cancel is not None and cancel.is_set():
            raise ProfileCancelled()
        value = theta_hat_i + delta * t
        try:
            conditional = fit_with_fixed(model, data, theta_tilde, i, value, fit_options)
        except FitError as e:
            logger.warning(f"theta[{i}]: refit failed at {value:.10g} ({e}), stopping this side")
            return _Side(points, truncated=True)
        if conditional.ssr < restart_threshold:
            raise ProfileRestart(conditional.theta, conditional.ssr)

        excess = max(conditional.ssr - fit.ssr, 0.0)
        tau = math.copysign(math.sqrt(excess), value - theta_hat_i) / fit.s
        if watch_degeneracy and free_correlation(conditional.jacobian, i) > HIGH_CORRELATION:
            logger.warning(f"theta[{i}]: the other parameters are no longer identifiable at {value:.6g} "
                           f"(tau={tau:.4g}), side treated as unbounded")
            return _Side(points, degenerate=True)
        points.append((tau, conditional.theta))

        eps_j = float(conditional.residuals @ conditional.jacobian[:, i])
        t += _inv_slope(tau, fit.s2, se, eps_j)
        theta_tilde = conditional.theta
        if abs(tau) > tau_max:
            return _Side(points, bounded=True)
    return _Side(points, truncated=True)


def _monotone_core(taus: np.ndarray, anchor: int) -> Tuple[Tuple[int, int], List[int], bool]:
    """Index range of the increasing run around the anchor, noise points skipped inside it"""
    skipped: List[int] = []
    non_monotone = False

    hi = anchor
    last = taus[anchor]
    for k in range(anchor + 1, len(taus)):
        if taus[k] > last:
            hi, last = k, taus[k]
        elif last - taus[k] <= TAU_NOISE:
            skipped.append(k)
        else:
            non_monotone = True
            break

    lo = anchor
    last = taus[anchor]
    for k in range(anchor - 1, -1, -1):
        if taus[k] < last:
            lo, last = k, taus[k]
        elif taus[k] - last <= TAU_NOISE:
            skipped.append(k)
        else:
            non_monotone = True
            break

    skipped = [k for k in skipped if lo < k < hi]
    return (lo, hi), skipped, non_monotone


def profile_parameter(model: ParamModel, data: Dataset, fit: FitResult, i: int,
                      opts: Optional[ProfileOptions] = None, fit_options: Optional[FitOptions] = None,
                      cancel: Optional[threading.Event] = None) -> ProfileTrace:
    """Sample tau(theta_i) on both sides of theta_hat_i.

    Raises ProfileRestart when a conditional refit beats fit.ssr.
    """
    opts = opts or ProfileOptions()
    if not 0 <= i < fit.p:
        raise ProfileError(f"Parameter index {i} out of range for {fit.p} parameters")
    se = float(fit.se[i])
    if not math.isfinite(se) or se <= 0:
        raise ProfileError(f"theta[{i}] has standard error {se}, cannot profile")
    tau_max = opts.tau_max if opts.tau_max is not None else profile_reach(opts.tau_max_level, fit.p, fit.dof)
    # parameters already inseparable at the estimate cannot degenerate further
    watch = free_correlation(fit.jacobian, i) <= HIGH_CORRELATION

    left = _sample_direction(model, data, fit, i, -1, opts, tau_max, fit_options, cancel, watch)
    right = _sample_direction(model, data, fit, i, +1, opts, tau_max, fit_options, cancel, watch)

    points = list(reversed(left.points)) + [(0.0, fit.theta_hat.copy())] + right.points
    anchor = len(left.points)
    taus = np.array([tau for tau, _ in points])
    thetas = np.vstack([theta for _, theta in points])

    (lo, hi), skipped, non_monotone = _monotone_core(taus, anchor)
    keep = [k for k in range(lo, hi + 1) if k not in skipped]
    if non_monotone:
        logger.warning(f"theta[{i}]: tau is not monotone along the trace")
    if skipped:
        logger.debug(f"theta[{i}]: skipped {len(skipped)} points with optimizer noise in tau")

    core_taus = taus[keep]
    core_theta = thetas[keep, i]
    try:
        tau_to_theta = make_spline_or_linear(core_taus, core_theta)
        theta_to_tau = make_spline_or_linear(core_theta, core_taus)
    except InsufficientKnotsError as e:
        raise ProfileError(f"theta[{i}]: {e}")
    if tau_to_theta.degraded:
        logger.warning(f"theta[{i}]: too few profile points for a cubic spline, interpolating linearly")
    if left.truncated or right.truncated:
        logger.warning(f"theta[{i}]: trace truncated before reaching tau_max={tau_max:.4g}")

    return ProfileTrace(index=i, taus=taus, thetas=thetas, theta_hat=float(fit.theta_hat[i]), se=se,
                        tau_max=tau_max, bounded_left=left.bounded, bounded_right=right.bounded,
                        truncated_left=left.truncated, truncated_right=right.truncated,
                        degenerate_left=left.degenerate, degenerate_right=right.degenerate,
                        non_monotone=non_monotone, noise_skipped=len(skipped), core=(lo, hi),
                        spline_tau_to_theta=tau_to_theta, spline_theta_to_tau=theta_to_tau)


def _side_bound(trace: ProfileTrace, q: float, side: int) -> Tuple[float, bool, bool]:
    """(bound, bounded, beyond_sampling) for tau = side * q.

    Only evaluates the spline inside the sampled monotone core.
    """
    target = side * q
    if trace.spline_tau_to_theta.contains(target):
        bound = float(trace.spline_tau_to_theta(target))
        if q > 0 and side * (bound - trace.theta_hat) <= 0:
            raise NonMonotoneProfileError(
                f"theta[{trace.index}]: bound {bound:.6g} for tau={target:.4g} is on the wrong side "
                f"of the estimate {trace.theta_hat:.6g}", trace)
        return bound, True, False

    lo, hi = trace.core
    outside = trace.taus[hi + 1:] if side > 0 else trace.taus[:lo]
    if np.any(side * outside >= q):
        raise NonMonotoneProfileError(
            f"theta[{trace.index}]: tau reaches {target:.4g} only after turning back", trace)
    if trace.bounded(side):
        logger.warning(f"theta[{trace.index}]: tau={target:.4g} lies beyond the sampled profile "
                       f"(cut-off {trace.tau_max:.4g}), side reported unbounded")
        return side * math.inf, False, True
    return side * math.inf, False, False


def profile_interval(trace: ProfileTrace, q: float) -> ProfileInterval:
    """Invert the trace at tau = -q and +q"""
    lower, bounded_lower, short_lower = _side_bound(trace, q, -1)
    upper, bounded_upper, short_upper = _side_bound(trace, q, +1)
    return ProfileInterval(lower, upper, bounded_lower, bounded_upper, short_lower or short_upper)


def profile_ci(trace: ProfileTrace, fit: FitResult, alpha: float) -> Tuple[float, float]:
    """Profile confidence interval for theta_i; unbounded sides are -inf/+inf"""
    interval = profile_interval(trace, t_quantile(fit.dof, alpha / 2.0))
    return interval.lower, interval.upper


# ---------------------------------------------------------------------------
# Running many profiles with the restart rule
# ---------------------------------------------------------------------------

@dataclass
class ProfileRun:
    fit: FitResult
    traces: Dict[int, ProfileTrace]
    failures: Dict[int, str]
    restarts: int = 0


def _refit_after_restart(model: ParamModel, data: Dataset, restart: ProfileRestart,
                         fit_options: Optional[FitOptions]) -> FitResult:
    logger.warning(f"Better optimum found while profiling (SSR={restart.ssr:.10g}), restarting")
    return run_fit(model, data, restart.theta, fit_options)


def profile_all(model: ParamModel, data: Dataset, fit: FitResult, indices: Optional[Sequence[int]] = None,
                opts: Optional[ProfileOptions] = None, fit_options: Optional[FitOptions] = None,
                max_workers: int = 4) -> ProfileRun:
    """Profiles of several parameters, restarting everything on a better optimum"""
    opts = opts or ProfileOptions()
    indices = list(range(fit.p)) if indices is None else list(indices)
    restarts = 0

    while True:
        traces: Dict[int, ProfileTrace] = {}
        failures: Dict[int, str] = {}
        cancel = threading.Event()
        restart: Optional[ProfileRestart] = None

        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(profile_parameter, model, data, fit, i, opts, fit_options, cancel): i
                       for i in indices}
            pending = set(futures)
            while pending and restart is None:
                done, pending = wait(pending, return_when=FIRST_EXCEPTION)
                for future in done:
                    i = futures[future]
                    try:
                        traces[i] = future.result()
                    except ProfileRestart as e:
                        restart = e if restart is None or e.ssr < restart.ssr else restart
                    except ProfileCancelled:
                        pass
                    except (ProfileError, FitError) as e:
                        failures[i] = str(e)
                        logger.warning(f"Profile of theta[{i}] failed: {e}")
            if restart is not None:
                cancel.set()
                for future in pending:
                    future.cancel()

        if restart is None:
            for trace in traces.values():
                trace.restarts = restarts
            return ProfileRun(fit, traces, failures, restarts)

        restarts += 1
        if restarts > opts.max_restarts:
            raise RestartLimitExceeded(opts.max_restarts, list(traces.values()))
        fit = _refit_after_restart(model, data, restart, fit_options)


# ---------------------------------------------------------------------------
# Prediction intervals
# ---------------------------------------------------------------------------

@dataclass
class ProfilePrediction:
    """Profile prediction interval at one point, for both interval variants"""
    x0: np.ndarray
    center: float
    pivot: int
    rse: float
    expectation: ProfileInterval
    full: ProfileInterval
    trace: ProfileTrace = field(repr=False)


def extended_options(opts: ProfileOptions, tau_needed: float) -> ProfileOptions:
    """Raise the sampling cut-off and point budget so |tau| = tau_needed gets sampled"""
    base_tau_max = opts.tau_max if opts.tau_max is not None else None
    if base_tau_max is not None and base_tau_max >= 1.02 * tau_needed:
        return opts
    k_max = max(opts.k_max, int(math.ceil(1.25 * opts.step * tau_needed)) + 2)
    tau_max = 1.02 * tau_needed if base_tau_max is None else max(base_tau_max, 1.02 * tau_needed)
    return replace(opts, k_max=k_max, tau_max=tau_max)


def profile_prediction(model: ParamModel, data: Dataset, fit: FitResult, x0: Sequence[float],
                       alpha: float, opts: Optional[ProfileOptions] = None,
                       fit_options: Optional[FitOptions] = None,
                       cancel: Optional[threading.Event] = None) -> ProfilePrediction:
    """Expectation-function and full-model profile intervals at x0.

    Raises ReparameterizationError when no parameter can be isolated, and
    ProfileRestart (in terms of the original parameters) on a better optimum.
    """
    opts = opts or ProfileOptions()
    rep = reparameterize(model, fit.theta_hat, x0)
    pivot = rep.pivot_parameter
    new_model = rep.model
    refit = run_fit(new_model, data, rep.theta_prime0, fit_options)
    if refit.ssr < fit.ssr - 1e-10 * (1.0 + fit.ssr):
        raise ProfileRestart(rep.base_theta(refit.theta_hat), refit.ssr)
    new_fit = summarize(new_model, data, rep.theta_prime0, refit.converged, refit.iterations)

    rse = float(new_fit.se[pivot])
    if not math.isfinite(rse) or rse <= 0:
        raise ProfileError(f"Prediction at {np.asarray(x0).tolist()} has standard error {rse}")
    q = t_quantile(fit.dof, alpha / 2.0)
    q_full = q * (rse + new_fit.s) / rse
    tau_max = opts.tau_max if opts.tau_max is not None else profile_reach(opts.tau_max_level, fit.p, fit.dof, [alpha])
    run_opts = extended_options(replace(opts, tau_max=tau_max), q_full)

    try:
        trace = profile_parameter(new_model, data, new_fit, pivot, run_opts, fit_options, cancel)
    except ProfileRestart as e:
        raise ProfileRestart(rep.base_theta(e.theta), e.ssr)

    center = float(rep.theta_prime0[pivot])
    return ProfilePrediction(x0=np.asarray(x0, dtype=float), center=center, pivot=pivot, rse=rse,
                             expectation=profile_interval(trace, q), full=profile_interval(trace, q_full),
                             trace=trace)


def profile_prediction_interval(model: ParamModel, data: Dataset, fit: FitResult, x0: Sequence[float],
                                alpha: float, include_noise: bool = False,
                                opts: Optional[ProfileOptions] = None,
                                fit_options: Optional[FitOptions] = None) -> Tuple[float, float, float]:
    """(center, lower, upper) of the profile prediction interval at x0"""
    prediction = profile_prediction(model, data, fit, x0, alpha, opts, fit_options)
    interval = prediction.full if include_noise else prediction.expectation
    return prediction.center, interval.lower, interval.upper


@dataclass
class PredictionRun:
    fit: FitResult
    predictions: Dict[int, ProfilePrediction]
    failures: Dict[int, str]
    restarts: int = 0


def profile_prediction_band(model: ParamModel, data: Dataset, fit: FitResult, points: np.ndarray,
                            alpha: float, opts: Optional[ProfileOptions] = None,
                            fit_options: Optional[FitOptions] = None, max_workers: int = 4) -> PredictionRun:
    """Profile prediction intervals for every row of points.

    Points that cannot be re-parameterized or profiled are listed in
    failures; a better optimum restarts the whole band.
    """
    opts = opts or ProfileOptions()
    points = np.asarray(points, dtype=float)
    restarts = 0

    while True:
        predictions: Dict[int, ProfilePrediction] = {}
        failures: Dict[int, str] = {}
        cancel = threading.Event()
        restart: Optional[ProfileRestart] = None

        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(profile_prediction, model, data, fit, row, alpha, opts,
                                       fit_options, cancel): k
                       for k, row in enumerate(points)}
            pending = set(futures)
            while pending and restart is None:
                done, pending = wait(pending, return_when=FIRST_EXCEPTION)
                for future in done:
                    k = futures[future]
                    try:
                        predictions[k] = future.result()
                    except ProfileRestart as e:
                        restart = e if restart is None or e.ssr < restart.ssr else restart
                    except ProfileCancelled:
                        pass
                    except (ReparameterizationError, ProfileError, FitError) as e:
                        failures[k] = str(e)
                        logger.debug(f"Profile prediction at point {k} failed: {e}")
            if restart is not None:
                cancel.set()
                for future in pending:
                    future.cancel()

        if restart is None:
            return PredictionRun(fit, predictions, failures, restarts)

        restarts += 1
        if restarts > opts.max_restarts:
            raise RestartLimitExceeded(opts.max_restarts)
        fit = _refit_after_restart(model, data, restart, fit_options)
