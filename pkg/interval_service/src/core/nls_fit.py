"""
Nonlinear least squares (Levenberg-Marquardt) and linear-approximation
confidence and prediction intervals
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from shared.models.data_models import Dataset, FitOptions
from .errors import FitError
from .numerics import t_quantile
from .param_model import ParamModel

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12
MAX_DAMPING = 1e16


@dataclass
class FitResult:
    """Least-squares estimate with its linear-approximation statistics.

    r_inv is P * R^-1 for the pivoted QR J P = Q R, so rows are indexed by
    parameter and r_inv @ r_inv.T = (J'J)^-1.
    """
    theta_hat: np.ndarray
    ssr: float
    s2: float
    s: float
    se: np.ndarray
    r_inv: np.ndarray
    corr: np.ndarray
    n: int
    p: int
    converged: bool
    iterations: int
    residuals: np.ndarray = field(repr=False, default=None)
    jacobian: np.ndarray = field(repr=False, default=None)
    rank_deficient: bool = False
    deficient_params: List[int] = field(default_factory=list)

    @property
    def dof(self) -> int:
        return self.n - self.p

    @property
    def gradient(self) -> np.ndarray:
        """J' * residuals at theta_hat"""
        return self.jacobian.T @ self.residuals


@dataclass
class ConditionalFit:
    """Optimum of SSR with one parameter held fixed"""
    theta: np.ndarray
    ssr: float
    converged: bool
    iterations: int
    residuals: np.ndarray = field(repr=False, default=None)
    jacobian: np.ndarray = field(repr=False, default=None)


@dataclass
class _Solution:
    theta: np.ndarray
    ssr: float
    residuals: np.ndarray
    jacobian: np.ndarray
    converged: bool
    iterations: int


def _sum_of_squares(residuals: np.ndarray) -> float:
    if not np.all(np.isfinite(residuals)):
        return math.inf
    return float(residuals @ residuals)


def _levenberg_marquardt(residual_fn: Callable[[np.ndarray], np.ndarray],
                         jacobian_fn: Callable[[np.ndarray], np.ndarray],
                         theta_start: np.ndarray, options: FitOptions) -> _Solution:
    """Minimize ||residual_fn(theta)||^2 where jacobian_fn = d prediction / d theta"""
    theta = np.array(theta_start, dtype=float)
    residuals = residual_fn(theta)
    ssr = _sum_of_squares(residuals)
    if not math.isfinite(ssr):
        raise FitError("Objective is not finite at the starting point")
    J = jacobian_fn(theta)
    if not np.all(np.isfinite(J)):
        raise FitError("Jacobian is not finite at the starting point")

    p = theta.shape[0]
    mean_diag = float(np.mean(np.sum(J * J, axis=0))) if p else 0.0
    damping = 1e-3 * mean_diag if mean_diag > 0 else 1e-3
    converged = False
    iterations = 0

    while iterations < options.max_iters:
        iterations += 1
        gradient = J.T @ residuals
        if np.max(np.abs(gradient), initial=0.0) < options.grad_tol:
            converged = True
            break

        augmented = np.vstack([J, math.sqrt(damping) * np.eye(p)])
        rhs = np.concatenate([residuals, np.zeros(p)])
        delta = np.linalg.lstsq(augmented, rhs, rcond=None)[0]
        trial = theta + delta
        trial_residuals = residual_fn(trial)
        trial_ssr = _sum_of_squares(trial_residuals)
        trial_J = jacobian_fn(trial) if math.isfinite(trial_ssr) and trial_ssr <= ssr else None

        if trial_J is not None and np.all(np.isfinite(trial_J)):
            rel_f = (ssr - trial_ssr) / ssr if ssr > 0 else 0.0
            rel_x = float(np.max(np.abs(delta) / (np.abs(theta) + 1e-12), initial=0.0))
            theta, residuals, ssr, J = trial, trial_residuals, trial_ssr, trial_J
            damping = max(damping / 10.0, 1e-300)
            if rel_f < options.tol_f and rel_x < options.tol_x:
                converged = True
                break
        else:
            damping *= 10.0
            if damping > MAX_DAMPING:
                # no acceptable step left; accept as converged only at a stationary point
                gradient = J.T @ residuals
                converged = bool(np.max(np.abs(gradient), initial=0.0) <= 1e-6 * (1.0 + ssr))
                break

    return _Solution(theta, ssr, residuals, J, converged, iterations)


def _linear_statistics(J: np.ndarray, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[int]]:
    """se, r_inv and corr from the pivoted QR of J; also the rank-deficient parameters"""
    n, p = J.shape
    _, R, perm = linalg.qr(J, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag >= RANK_TOLERANCE * diag[0])) if p and diag[0] > 0 else 0

    r_inv = np.full((p, p), np.inf)
    deficient: List[int] = []
    if rank == p:
        block_inv = linalg.solve_triangular(R, np.eye(p))
        r_inv[perm, :] = block_inv
    else:
        _, singular, vt = np.linalg.svd(J, full_matrices=True)
        null_space = vt[rank:, :]
        deficient = sorted(int(i) for i in np.nonzero(np.any(np.abs(null_space) > 1e-8, axis=0))[0])
        r_inv[:] = 0.0
        if rank:
            block_inv = linalg.solve_triangular(R[:rank, :rank], np.eye(rank))
            r_inv[perm[:rank], :rank] = block_inv
        r_inv[deficient, :] = np.inf

    with np.errstate(invalid="ignore"):
        row_norms = np.sqrt(np.sum(r_inv * r_inv, axis=1))
        se = s * row_norms
        cov_like = r_inv @ r_inv.T if not deficient else _finite_product(r_inv, deficient)
        corr = cov_like / np.outer(row_norms, row_norms)
    corr[deficient, :] = np.nan
    corr[:, deficient] = np.nan
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    se[deficient] = np.inf
    return se, r_inv, corr, deficient


def _finite_product(r_inv: np.ndarray, deficient: List[int]) -> np.ndarray:
    usable = np.where(np.isfinite(r_inv), r_inv, 0.0)
    return usable @ usable.T


def free_correlation(J: np.ndarray, fixed_index: int) -> float:
    """Largest |corr| among the parameters left free when theta[fixed_index] is held.

    inf when the free columns of J are rank deficient or not finite.
    """
    free = np.delete(J, fixed_index, axis=1)
    if free.shape[1] < 2:
        return 0.0
    if not np.all(np.isfinite(free)):
        return math.inf
    _, _, corr, deficient = _linear_statistics(free, 1.0)
    if deficient:
        return math.inf
    off_diagonal = ~np.eye(corr.shape[0], dtype=bool)
    return float(np.max(np.abs(corr[off_diagonal])))


def fit(model: ParamModel, data: Dataset, theta_start: Optional[Sequence[float]] = None,
        options: Optional[FitOptions] = None) -> FitResult:
    """Least-squares fit of model to data, started at theta_start (default theta0)"""
    options = options or FitOptions()
    p = model.n_params
    if p < 1:
        raise FitError("Model has no parameters to fit")
    if data.n <= p:
        raise FitError(f"Need more observations than parameters (n={data.n}, p={p})")
    start = model.theta0 if theta_start is None else np.asarray(theta_start, dtype=float)
    if start.shape != (p,) or not np.all(np.isfinite(start)):
        raise FitError(f"Starting vector must hold {p} finite values")

    X, y = data.X, data.y
    solution = _levenberg_marquardt(lambda th: y - model.predict(th, X),
                                    lambda th: model.jacobian_at(th, X),
                                    start, options)
    result = summarize(model, data, solution.theta, solution.converged, solution.iterations)
    if not result.converged:
        logger.warning(f"Fit did not converge after {result.iterations} iterations (SSR={result.ssr:.10g})")
    else:
        logger.debug(f"Fit converged in {result.iterations} iterations, SSR={result.ssr:.10g}")
    return result


def summarize(model: ParamModel, data: Dataset, theta: Sequence[float],
              converged: bool = True, iterations: int = 0) -> FitResult:
    """Linear-approximation statistics at a given parameter vector"""
    theta = np.asarray(theta, dtype=float)
    n, p = data.n, model.n_params
    residuals = data.y - model.predict(theta, data.X)
    ssr = _sum_of_squares(residuals)
    if not math.isfinite(ssr):
        raise FitError("Objective is not finite at the estimate")
    J = model.jacobian_at(theta, data.X)
    if not np.all(np.isfinite(J)):
        raise FitError("Jacobian is not finite at the estimate")
    s2 = ssr / (n - p)
    s = math.sqrt(s2)
    se, r_inv, corr, deficient = _linear_statistics(J, s)
    if deficient:
        logger.warning(f"Rank-deficient Jacobian, parameters {deficient} are not identifiable")
    return FitResult(theta_hat=theta, ssr=ssr, s2=s2, s=s, se=se, r_inv=r_inv, corr=corr,
                     n=n, p=p, converged=converged, iterations=iterations,
                     residuals=residuals, jacobian=J,
                     rank_deficient=bool(deficient), deficient_params=deficient)


def fit_with_fixed(model: ParamModel, data: Dataset, theta_start: Sequence[float],
                   fixed_index: int, fixed_value: float,
                   options: Optional[FitOptions] = None) -> ConditionalFit:
    """Minimize SSR over all parameters except theta[fixed_index] = fixed_value"""
    options = options or FitOptions()
    p = model.n_params
    if not 0 <= fixed_index < p:
        raise FitError(f"fixed_index {fixed_index} out of range for {p} parameters")
    X, y = data.X, data.y
    base = np.array(theta_start, dtype=float)
    base[fixed_index] = fixed_value
    free = [j for j in range(p) if j != fixed_index]

    if not free:
        residuals = y - model.predict(base, X)
        ssr = _sum_of_squares(residuals)
        if not math.isfinite(ssr):
            raise FitError(f"Objective is not finite at theta[{fixed_index}]={fixed_value}")
        return ConditionalFit(base, ssr, True, 0, residuals, model.jacobian_at(base, X))

    def expand(free_values: np.ndarray) -> np.ndarray:
        full = base.copy()
        full[free] = free_values
        return full

    solution = _levenberg_marquardt(lambda th: y - model.predict(expand(th), X),
                                    lambda th: model.jacobian_at(expand(th), X)[:, free],
                                    base[free], options)
    theta = expand(solution.theta)
    return ConditionalFit(theta, solution.ssr, solution.converged, solution.iterations,
                          solution.residuals, model.jacobian_at(theta, X))


# ---------------------------------------------------------------------------
# Linear-approximation intervals
# ---------------------------------------------------------------------------

def linear_ci(fit: FitResult, alpha: float) -> List[Tuple[float, float]]:
    """theta_hat_i -/+ se_i * t(n - p, alpha / 2)"""
    t = t_quantile(fit.dof, alpha / 2.0)
    intervals = []
    for i in range(fit.p):
        if not np.isfinite(fit.se[i]):
            logger.warning(f"theta[{i}] has infinite standard error, interval is unbounded")
            intervals.append((-math.inf, math.inf))
            continue
        half = fit.se[i] * t
        intervals.append((float(fit.theta_hat[i] - half), float(fit.theta_hat[i] + half)))
    return intervals


def prediction_rse(fit: FitResult, model: ParamModel, X_new: np.ndarray) -> np.ndarray:
    """Delta-method standard error s * ||J_new r_inv|| for each row of X_new"""
    J_new = model.jacobian_at(fit.theta_hat, X_new)
    with np.errstate(invalid="ignore"):
        return fit.s * np.sqrt(np.sum((J_new @ fit.r_inv) ** 2, axis=1))


def linear_prediction_band(fit: FitResult, model: ParamModel, X_new: np.ndarray, alpha: float,
                           include_noise: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new.reshape(1, -1)
    center = np.array(model.predict(fit.theta_hat, X_new), dtype=float)
    rse = prediction_rse(fit, model, X_new)
    if fit.rank_deficient:
        rse = np.full_like(rse, np.inf)
    width = rse + fit.s if include_noise else rse
    half = width * t_quantile(fit.dof, alpha / 2.0)
    return center, center - half, center + half


def linear_prediction(fit: FitResult, model: ParamModel, x_new: Sequence[float], alpha: float,
                      include_noise: bool = False) -> Tuple[float, float, float]:
    """Prediction at x_new with its linear-approximation interval"""
    center, lower, upper = linear_prediction_band(fit, model, np.asarray(x_new, dtype=float).reshape(1, -1),
                                                  alpha, include_noise)
    return float(center[0]), float(lower[0]), float(upper[0])
