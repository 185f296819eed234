"""
Analysis orchestration: fit, profile, contour and prediction runs with report output
"""
import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from shared.models.data_models import AnalysisConfig, Dataset, ProfileOptions, Report
from ..core import expr_core as ec
from ..core.contour import profile_contour, tau_scale
from ..core.errors import ConfigError, ContourUnavailable, FitError, NonMonotoneProfileError, \
    ProfileError, RestartLimitExceeded
from ..core.nls_fit import FitResult, fit as run_fit, linear_ci, linear_prediction_band
from ..core.numerics import profile_reach, t_quantile
from ..core.param_model import ParamModel, check_identifiability, parameterize
from ..core.profile import ProfileRun, ProfileTrace, extended_options, profile_all, profile_interval, \
    profile_prediction_band
from ..reporting import report_writer as rw
from ..utils.logger import get_logger
from .dataset_processor import DatasetProcessor

CONTOUR_REACH = 1.05


@dataclass
class AnalysisState:
    """Everything computed so far for one analysis run"""
    source: str
    model: ParamModel
    data: Dataset
    fit: FitResult
    report: Report
    traces: Dict[int, ProfileTrace] = field(default_factory=dict)
    band: Optional[pd.DataFrame] = None


class AnalysisProcessor(DatasetProcessor):
    """Runs the interval analyses configured in an AnalysisConfig"""

    def __init__(self, config: AnalysisConfig, base_dir: Optional[Path] = None):
        super().__init__(base_dir)
        self.config = config
        self.logger = get_logger('analysis-processor')
        self.output_dir = self.resolve(config.output_dir)

    # ------------------------------------------------------------------
    # Fit
    # ------------------------------------------------------------------

    def prepare(self) -> Tuple[str, ParamModel, Dataset]:
        """
        Load data and expression, then parameterize the expression

        Returns:
            Tuple of (canonical expression text, model, dataset)
        """
        config = self.config
        text, file_variables, file_target = self.load_expression(config.expression, config.expression_file)
        variables = config.variables or file_variables
        target = config.target or file_target
        data = self.load_dataset(config.data_path, target, variables, config.target_transform)

        expr = ec.parse(text, variables=data.columns)
        source = ec.to_string(expr, data.columns)
        model = parameterize(expr, variable_names=data.columns, n_vars=data.m)
        self.logger.info(f"Model: {source}")
        self.logger.info(f"Parameterized: {model.to_string()} (p={model.n_params})")
        return source, model, data

    def run_fit(self) -> AnalysisState:
        """Fit the parameterized model and collect identifiability warnings"""
        source, model, data = self.prepare()
        if model.is_zero_parameter:
            self._write_zero_parameter_report(source, model, data)
            raise FitError("Expression has no numeric literals, nothing to fit")

        fit = run_fit(model, data, options=self.config.optimizer)
        identifiability = check_identifiability(model, data, fit)
        report = rw.build_report(source, model, fit, identifiability)
        self.logger.info(f"Fit: SSR={fit.ssr:.6g}, s²={fit.s2:.6g}, converged={fit.converged} "
                         f"after {fit.iterations} iterations")
        for i in range(fit.p):
            self.logger.info(f"  theta[{i}] = {fit.theta_hat[i]:.6g} (se {fit.se[i]:.4g})")
        return AnalysisState(source, model, data, fit, report)

    def _write_zero_parameter_report(self, source: str, model: ParamModel, data: Dataset) -> None:
        residuals = data.y - model.predict(np.zeros(0), data.X)
        ssr = float(np.sum(residuals ** 2))
        report = Report(model=source, parameterized_model=model.to_string(), n=data.n, p=0,
                        ssr=ssr, s2=ssr / data.n, converged=True, iterations=0)
        report.warn('ZERO_PARAMETER_MODEL', "expression has no parameters; intervals need p >= 1")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        rw.write_fit_report(report, self.output_dir)

    def _refresh_fit(self, state: AnalysisState, new_fit: FitResult, restarts: int) -> None:
        """Replace the fit after a profiling restart, keeping the file manifest"""
        identifiability = check_identifiability(state.model, state.data, new_fit)
        report = rw.build_report(state.source, state.model, new_fit, identifiability)
        report.files = state.report.files
        kept = [w for w in state.report.warnings if w.code.startswith(('PROFILE', 'CONTOUR', 'LINEAR'))]
        report.warnings = kept + report.warnings
        report.warn('PROFILE_RESTART', f"profiling found a better optimum, fit restarted {restarts} time(s)",
                    restarts=restarts, ssr=new_fit.ssr)
        state.fit = new_fit
        state.report = report

    # ------------------------------------------------------------------
    # Profiles and parameter intervals
    # ------------------------------------------------------------------

    def profile_options(self, fit: FitResult, tau_needed: float = 0.0) -> ProfileOptions:
        """Profile options with the sampling cut-off resolved to cover every
        configured alpha, then raised to tau_needed"""
        opts = self.config.profile
        tau_max = opts.tau_max if opts.tau_max is not None else \
            profile_reach(opts.tau_max_level, fit.p, fit.dof, self.config.alphas)
        opts = replace(opts, tau_max=tau_max)
        if tau_needed > tau_max:
            self.logger.info(f"Raising profile cut-off from {tau_max:.4g} to cover tau={tau_needed:.4g}")
            opts = extended_options(opts, tau_needed)
        return opts

    def contour_reach(self, fit: FitResult) -> float:
        alphas = self.config.contour_alphas
        return CONTOUR_REACH * max(tau_scale(fit.p, fit.dof, a) for a in alphas) if alphas else 0.0

    def run_profile(self, state: AnalysisState, with_contours: bool = False) -> ProfileRun:
        """
        Profile every parameter, write trace CSVs and the interval table

        Args:
            state: Analysis state after the fit
            with_contours: Sample far enough for the contour levels too

        Returns:
            ProfileRun (its fit replaces state.fit after a restart)
        """
        config = self.config
        tau_needed = self.contour_reach(state.fit) if with_contours else 0.0
        opts = self.profile_options(state.fit, tau_needed)
        self.logger.info(f"Profiling {state.fit.p} parameters (tau_max={opts.tau_max:.4g}, "
                         f"k_max={opts.k_max}, workers={config.max_workers})")
        try:
            run = profile_all(state.model, state.data, state.fit, None, opts, config.optimizer, config.max_workers)
        except RestartLimitExceeded as e:
            state.report.warn('PROFILE_FAILED', f"restart limit {e.restarts} exceeded", restarts=e.restarts)
            for trace in e.traces:
                self._record_file(state, rw.write_trace_csv(trace, self.output_dir))
            raise

        if run.restarts:
            self._refresh_fit(state, run.fit, run.restarts)
        for i, message in sorted(run.failures.items()):
            state.report.warn('PROFILE_FAILED', f"theta[{i}]: {message}", param=i)
        if not run.traces:
            raise ProfileError("No parameter could be profiled")

        state.traces = run.traces
        for i, trace in sorted(run.traces.items()):
            self._trace_warnings(state.report, trace)
            if 'csv' in config.output_formats:
                self._record_file(state, rw.write_trace_csv(trace, self.output_dir))
        self.compute_intervals(state)
        return run

    def _trace_warnings(self, report: Report, trace: ProfileTrace) -> None:
        i = trace.index
        if trace.truncated_left or trace.truncated_right:
            report.warn('PROFILE_TRUNCATED', f"theta[{i}]: trace stopped before tau_max", param=i,
                        left=trace.truncated_left, right=trace.truncated_right)
        if trace.degenerate_left or trace.degenerate_right:
            report.warn('PROFILE_DEGENERATE', f"theta[{i}]: the other parameters lose identifiability "
                        f"before tau_max, side treated as unbounded", param=i,
                        left=trace.degenerate_left, right=trace.degenerate_right)
        if trace.non_monotone:
            report.warn('PROFILE_NON_MONOTONE', f"theta[{i}]: tau is not monotone, using the monotone core",
                        param=i)
        if trace.degraded:
            report.warn('SPLINE_DEGRADED', f"theta[{i}]: too few points for a cubic spline", param=i)

    def compute_intervals(self, state: AnalysisState) -> List[Dict]:
        """Linear and profile intervals for every parameter and alpha"""
        fit, report = state.fit, state.report
        rows = []
        for alpha in self.config.alphas:
            linear = linear_ci(fit, alpha)
            q = t_quantile(fit.dof, alpha / 2.0)
            for i in range(fit.p):
                interval = None
                trace = state.traces.get(i)
                if trace is not None:
                    try:
                        interval = profile_interval(trace, q)
                    except NonMonotoneProfileError as e:
                        report.warn('PROFILE_NON_MONOTONE', str(e), param=i, alpha=alpha)
                if interval is not None and interval.beyond_sampling:
                    report.warn('PROFILE_BEYOND_SAMPLING',
                                f"theta[{i}] at alpha={alpha:g}: level lies beyond the sampled profile",
                                param=i, alpha=alpha)
                row = rw.interval_row(i, alpha, float(fit.theta_hat[i]), linear[i], interval)
                rows.append(row)
                if alpha == self.config.alphas[0]:
                    self._fill_parameter_row(report, row)
        report.intervals = rows
        if 'json' in self.config.output_formats:
            self._record_file(state, rw.write_intervals(rows, self.config.alphas, self.output_dir))
        return rows

    @staticmethod
    def _fill_parameter_row(report: Report, row: Dict) -> None:
        param = report.parameters[row['param_index']]
        param.linear_lower = row['linear_lower']
        param.linear_upper = row['linear_upper']
        param.profile_lower = row['profile_lower']
        param.profile_upper = row['profile_upper']
        param.bounded_lower = row['bounded_lower']
        param.bounded_upper = row['bounded_upper']

    # ------------------------------------------------------------------
    # Contours
    # ------------------------------------------------------------------

    def contour_pairs(self, p: int) -> List[Tuple[int, int]]:
        pairs = self.config.pairs
        if pairs is None:
            return list(itertools.combinations(range(p), 2))
        for i, j in pairs:
            if max(i, j) >= p:
                raise ConfigError(f"Parameter pair ({i}, {j}) out of range for {p} parameters")
        return list(pairs)

    def run_contour(self, state: AnalysisState) -> int:
        """
        Pairwise contours at every contour alpha

        Returns:
            Number of contour files written
        """
        if not state.traces or self._needs_more_reach(state):
            self.run_profile(state, with_contours=True)
        pairs = self.contour_pairs(state.fit.p)
        written = 0
        for (i, j), alpha in itertools.product(pairs, self.config.contour_alphas):
            try:
                curve = profile_contour(i, j, state.traces, state.fit, alpha, self.config.contour_steps)
            except ContourUnavailable as e:
                state.report.unavailable_contours.append({'pair': [i, j], 'alpha': alpha, 'reason': e.reason})
                state.report.warn('CONTOUR_UNAVAILABLE', f"pair ({i}, {j}) at alpha={alpha:g}: {e}",
                                  pair=[i, j], alpha=alpha, reason=e.reason)
                continue
            if curve.extrapolated:
                state.report.warn('CONTOUR_EXTRAPOLATED', f"pair ({i}, {j}) at alpha={alpha:g} extrapolates",
                                  pair=[i, j], alpha=alpha)
            if 'csv' in self.config.output_formats:
                self._record_file(state, rw.write_contour_csv(curve, self.output_dir))
            written += 1
        self.logger.info(f"Contours: {written} written, {len(state.report.unavailable_contours)} unavailable")
        return written

    def _needs_more_reach(self, state: AnalysisState) -> bool:
        reach = self.contour_reach(state.fit)
        return any(trace.tau_max < reach for trace in state.traces.values())

    # ------------------------------------------------------------------
    # Prediction bands
    # ------------------------------------------------------------------

    def run_predict(self, state: AnalysisState) -> pd.DataFrame:
        """
        Linear and profile prediction intervals at the configured points,
        for the expectation function and the full model

        Returns:
            Band table with one row per point and variant
        """
        config = self.config
        points = self.load_points(config.points, state.data.columns)
        alpha = config.alphas[0]
        self.logger.info(f"Predicting at {len(points)} points (alpha={alpha:g})")

        opts = self.profile_options(state.fit)
        run = profile_prediction_band(state.model, state.data, state.fit, points, alpha, opts,
                                      config.optimizer, config.max_workers)
        if run.restarts:
            self._refresh_fit(state, run.fit, run.restarts)
        fit = state.fit

        frames = []
        fallbacks = sorted(run.failures)
        for variant, include_noise in (('expectation', False), ('full', True)):
            center, linear_lo, linear_hi = linear_prediction_band(fit, state.model, points, alpha, include_noise)
            profile_lo = linear_lo.copy()
            profile_hi = linear_hi.copy()
            flags = []
            for k in range(len(points)):
                prediction = run.predictions.get(k)
                if prediction is None:
                    flags.append('linear_fallback')
                    continue
                interval = prediction.full if include_noise else prediction.expectation
                profile_lo[k], profile_hi[k] = interval.lower, interval.upper
                point_flags = ['profile']
                if not (interval.bounded_lower and interval.bounded_upper):
                    point_flags.append('unbounded')
                if interval.beyond_sampling:
                    point_flags.append('beyond_sampling')
                flags.append(';'.join(point_flags))
            frame = pd.DataFrame(points, columns=state.data.columns)
            frame['variant'] = variant
            frame['center'] = center
            frame['linear_lo'] = linear_lo
            frame['linear_hi'] = linear_hi
            frame['profile_lo'] = profile_lo
            frame['profile_hi'] = profile_hi
            frame['method_flags'] = flags
            frames.append(frame)
        band = pd.concat(frames, ignore_index=True)

        if fallbacks:
            reasons = sorted(set(run.failures.values()))
            state.report.warn('LINEAR_FALLBACK',
                              f"{len(fallbacks)} of {len(points)} points use the linear interval "
                              f"({'; '.join(reasons)})",
                              points=[points[k].tolist() for k in fallbacks])
        if 'csv' in config.output_formats:
            self._record_file(state, rw.write_band_csv(band, self.output_dir))
        state.band = band
        return band

    # ------------------------------------------------------------------
    # Output
    # ------------------------------------------------------------------

    def _record_file(self, state: AnalysisState, path: Path) -> None:
        name = Path(path).name
        if name not in state.report.files:
            state.report.files.append(name)

    def finish(self, state: AnalysisState, markdown: bool = False) -> Report:
        """Write the fit report (and optionally the markdown summary)"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if markdown:
            self._record_file(state, rw.write_markdown_report(state.report, self.output_dir))
        if 'json' in self.config.output_formats:
            rw.write_fit_report(state.report, self.output_dir)
        self.logger.info(f"Results written to {self.output_dir} "
                         f"({len(state.report.files)} files, {len(state.report.warnings)} warnings)")
        return state.report


def sample_kotanchek(seed: Optional[int], n_train: int = 100) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Training sample (uniform on [0.3, 4]^2) and 45x45 test grid on
    [-0.2, 4.2]^2 for the Kotanchek function
    """
    rng = np.random.default_rng(seed)
    train = rng.uniform(0.3, 4.0, size=(n_train, 2))
    axis = np.round(-0.2 + 0.1 * np.arange(45), 10)
    grid = np.array(list(itertools.product(axis, axis)))

    def target(xy: np.ndarray) -> np.ndarray:
        x, y = xy[:, 0], xy[:, 1]
        return np.exp(-(x - 1.0) ** 2) / (1.2 + (y - 2.5) ** 2)

    frames = []
    for xy in (train, grid):
        frames.append(pd.DataFrame({'x': xy[:, 0], 'y': xy[:, 1], 'target': target(xy)}))
    return frames[0], frames[1]

