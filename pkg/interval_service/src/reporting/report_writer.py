"""
Report building and JSON/CSV/markdown writers
"""
import logging
import math
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from shared.models.data_models import ParameterRow, Report
from shared.utils.file_utils import write_csv, write_json
from ..core.contour import ContourCurve
from ..core.nls_fit import FitResult
from ..core.param_model import IdentifiabilityReport, ParamModel
from ..core.profile import ProfileTrace

logger = logging.getLogger(__name__)

FIT_REPORT_FILE = 'fit_report.json'
INTERVALS_FILE = 'intervals.json'
BAND_FILE = 'prediction_band.csv'
MARKDOWN_FILE = 'report.md'

TRACE_COLUMNS = ['param_index', 'tau']
CONTOUR_COLUMNS = ['pair_i', 'pair_j', 'alpha', 'point_index', 'theta_i', 'theta_j', 'extrapolated_flag']
BAND_COLUMNS = ['variant', 'center', 'linear_lo', 'linear_hi', 'profile_lo', 'profile_hi', 'method_flags']


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def alpha_label(alpha: float) -> str:
    return f"{alpha:g}"


def trace_file_name(index: int) -> str:
    return f"profile_theta{index}.csv"


def contour_file_name(i: int, j: int, alpha: float) -> str:
    return f"contour_{i}_{j}_a{alpha_label(alpha)}.csv"


def correlation_lower(corr: np.ndarray) -> List[List[Optional[float]]]:
    """Lower triangle (diagonal included) as in the fit-report layout"""
    return [[_finite_or_none(corr[i, j]) for j in range(i + 1)] for i in range(corr.shape[0])]


def build_report(original_text: str, model: ParamModel, fit: FitResult,
                 identifiability: Optional[IdentifiabilityReport] = None) -> Report:
    """
    Fit summary with warnings for convergence and identifiability problems

    Args:
        original_text: Canonical print of the expression as given
        model: Parameterized model
        fit: Fit at the estimate
        identifiability: Diagnostics from check_identifiability

    Returns:
        Report without interval columns
    """
    report = Report(
        model=original_text,
        parameterized_model=model.to_string(),
        n=fit.n, p=fit.p, ssr=fit.ssr, s2=fit.s2,
        converged=fit.converged, iterations=fit.iterations,
        parameters=[ParameterRow(index=i, estimate=float(fit.theta_hat[i]), se=float(fit.se[i]))
                    for i in range(fit.p)],
        correlation=correlation_lower(fit.corr),
        fixed_constants=list(model.fixed_constants),
    )
    if not fit.converged:
        report.warn('NON_CONVERGED', f"optimizer stopped after {fit.iterations} iterations without converging")
    for position, value in model.fixed_constants:
        report.warn('FIXED_CONSTANT', f"literal {value:g} kept fixed (scales a parameterized sum)",
                    position=position, value=value)
    for i in range(fit.p):
        if not math.isfinite(fit.se[i]):
            report.warn('INFINITE_SE', f"theta[{i}] has an infinite standard error", param=i)
    if identifiability is not None:
        if identifiability.rank_deficient:
            report.warn('RANK_DEFICIENT', identifiability.error, params=identifiability.deficient_params)
        for i, j, c in identifiability.high_correlation:
            report.warn('HIGH_CORRELATION', f"|corr(theta[{i}], theta[{j}])| = {abs(c):.6f}",
                        params=[i, j], corr=c)
        for i in identifiability.large_relative_se:
            report.warn('LARGE_RELATIVE_SE',
                        f"se(theta[{i}]) is {identifiability.relative_se[i]:.3g} times |theta[{i}]|", param=i)
        for i in identifiability.zero_estimates:
            report.warn('ZERO_ESTIMATE', f"theta[{i}] is estimated as zero", param=i)
    return report


def report_to_dict(report: Report) -> Dict[str, Any]:
    return {
        'model': report.model,
        'parameterized_model': report.parameterized_model,
        'n': report.n,
        'p': report.p,
        'ssr': report.ssr,
        's2': report.s2,
        's': math.sqrt(report.s2),
        'converged': report.converged,
        'iterations': report.iterations,
        'parameters': [{
            'index': row.index,
            'estimate': row.estimate,
            'se': _finite_or_none(row.se),
            'linear_lower': _finite_or_none(row.linear_lower),
            'linear_upper': _finite_or_none(row.linear_upper),
            'profile_lower': _finite_or_none(row.profile_lower),
            'profile_upper': _finite_or_none(row.profile_upper),
            'bounded_lower': row.bounded_lower,
            'bounded_upper': row.bounded_upper,
        } for row in report.parameters],
        'correlation': report.correlation,
        'fixed_constants': [{'position': pos, 'value': value} for pos, value in report.fixed_constants],
        'warnings': [w.to_dict() for w in report.warnings],
        'files': report.files,
        'intervals': report.intervals,
        'unavailable_contours': report.unavailable_contours,
    }


def write_fit_report(report: Report, output_dir: Path) -> Path:
    path = Path(output_dir) / FIT_REPORT_FILE
    write_json(report_to_dict(report), path)
    logger.info(f"Fit report written to {path}")
    return path


def interval_row(index: int, alpha: float, estimate: float, linear: Sequence[float],
                 profile: Optional[Any] = None) -> Dict[str, Any]:
    """One row of the interval table; unbounded sides are null with bounded=false"""
    row = {
        'param_index': index,
        'alpha': alpha,
        'estimate': estimate,
        'linear_lower': _finite_or_none(linear[0]),
        'linear_upper': _finite_or_none(linear[1]),
        'profile_lower': None,
        'profile_upper': None,
        'bounded_lower': False,
        'bounded_upper': False,
        'beyond_sampling': False,
    }
    if profile is not None:
        row.update({
            'profile_lower': _finite_or_none(profile.lower),
            'profile_upper': _finite_or_none(profile.upper),
            'bounded_lower': bool(profile.bounded_lower and math.isfinite(profile.lower)),
            'bounded_upper': bool(profile.bounded_upper and math.isfinite(profile.upper)),
            'beyond_sampling': bool(profile.beyond_sampling),
        })
    return row


def write_intervals(rows: List[Dict[str, Any]], alphas: Sequence[float], output_dir: Path) -> Path:
    path = Path(output_dir) / INTERVALS_FILE
    write_json({'alphas': list(alphas), 'rows': rows}, path)
    return path


def trace_frame(trace: ProfileTrace) -> pd.DataFrame:
    p = trace.thetas.shape[1]
    df = pd.DataFrame({'param_index': np.full(len(trace.taus), trace.index, dtype=int), 'tau': trace.taus})
    for k in range(p):
        df[f"theta_{k}"] = trace.thetas[:, k]
    df['tau_linear'] = trace.tau_linear
    return df


def write_trace_csv(trace: ProfileTrace, output_dir: Path) -> Path:
    return write_csv(trace_frame(trace), Path(output_dir) / trace_file_name(trace.index))


def contour_frame(curve: ContourCurve) -> pd.DataFrame:
    steps = curve.steps
    return pd.DataFrame({
        'pair_i': np.full(steps, curve.i, dtype=int),
        'pair_j': np.full(steps, curve.j, dtype=int),
        'alpha': np.full(steps, curve.alpha),
        'point_index': np.arange(steps),
        'theta_i': curve.points[:, 0],
        'theta_j': curve.points[:, 1],
        'extrapolated_flag': np.full(steps, int(curve.extrapolated)),
    }, columns=CONTOUR_COLUMNS)


def write_contour_csv(curve: ContourCurve, output_dir: Path) -> Path:
    return write_csv(contour_frame(curve), Path(output_dir) / contour_file_name(curve.i, curve.j, curve.alpha))


def write_band_csv(band: pd.DataFrame, output_dir: Path) -> Path:
    return write_csv(band, Path(output_dir) / BAND_FILE)


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return '-'
    if isinstance(value, float) and math.isinf(value):
        return '-inf' if value < 0 else 'inf'
    return f"{value:.4g}"


def generate_markdown_report(report: Report) -> str:
    """
    Markdown summary: fit statistics, parameter table with correlations,
    interval table and warnings

    Args:
        report: Report with intervals filled in

    Returns:
        str: Markdown formatted report
    """
    out = StringIO()
    out.write("# Maximum Likelihood Fitting Results\n\n")
    out.write(f"* Model: `{report.model}`\n")
    out.write(f"* Parameterized: `{report.parameterized_model}`\n")
    out.write(f"* n = {report.n}, p = {report.p}\n")
    out.write(f"* SSR = {report.ssr:.6g}, s² = {report.s2:.6g}\n")
    out.write(f"* Converged: {'yes' if report.converged else 'no'} ({report.iterations} iterations)\n\n")

    out.write("## Parameters\n\n")
    table = pd.DataFrame({
        'Par': [row.index for row in report.parameters],
        'Estimate': [f"{row.estimate:.4g}" for row in report.parameters],
        'Std. err.': [_fmt(row.se) for row in report.parameters],
    })
    for j in range(report.p):
        table[str(j)] = [_fmt(report.correlation[i][j]) if j <= i else '' for i in range(report.p)]
    out.write(table.to_markdown(index=False))
    out.write("\n\n")

    if report.intervals:
        out.write("## Confidence Intervals\n\n")
        intervals = pd.DataFrame([{
            'Par': row['param_index'],
            'alpha': row['alpha'],
            'Linear lower': _fmt(row['linear_lower']) if row['linear_lower'] is not None else '-inf',
            'Linear upper': _fmt(row['linear_upper']) if row['linear_upper'] is not None else 'inf',
            'Profile lower': _fmt(row['profile_lower']) if row['bounded_lower'] else '-inf',
            'Profile upper': _fmt(row['profile_upper']) if row['bounded_upper'] else 'inf',
        } for row in report.intervals])
        out.write(intervals.to_markdown(index=False))
        out.write("\n\n")

    out.write("## Warnings\n\n")
    if report.warnings:
        for warning in report.warnings:
            out.write(f"* `{warning.code}`: {warning.message}\n")
    else:
        out.write("No warnings.\n")
    out.write("\n")

    if report.files:
        out.write("## Files\n\n")
        for name in report.files:
            out.write(f"* {name}\n")
    return out.getvalue()


def write_markdown_report(report: Report, output_dir: Path) -> Path:
    path = Path(output_dir) / MARKDOWN_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(generate_markdown_report(report))
    return path
