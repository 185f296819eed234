"""
Loaders for every file the service writes
"""
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from shared.utils.file_utils import read_json
from ..core.errors import DatasetError
from .report_writer import BAND_COLUMNS, CONTOUR_COLUMNS

REPORT_KEYS = ['model', 'parameterized_model', 'n', 'p', 'ssr', 's2', 'converged', 'parameters',
               'correlation', 'warnings', 'files']


def _require_columns(df: pd.DataFrame, columns: List[str], path: Path) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DatasetError(f"missing columns {missing}", path)


def load_fit_report(path: Path) -> Dict[str, Any]:
    report = read_json(path)
    missing = [k for k in REPORT_KEYS if k not in report]
    if missing:
        raise DatasetError(f"fit report lacks keys {missing}", path)
    if len(report['parameters']) != report['p']:
        raise DatasetError("parameter table length does not match p", path)
    return report


def load_intervals(path: Path) -> Dict[str, Any]:
    intervals = read_json(path)
    if 'rows' not in intervals or 'alphas' not in intervals:
        raise DatasetError("interval table lacks 'rows'/'alphas'", path)
    return intervals


def load_trace_csv(path: Path) -> Dict[str, Any]:
    """param_index, taus, thetas (k x p) and tau_linear from a trace CSV"""
    df = pd.read_csv(path)
    _require_columns(df, ['param_index', 'tau', 'tau_linear'], path)
    theta_columns = sorted((c for c in df.columns if c.startswith('theta_')), key=lambda c: int(c[6:]))
    if not theta_columns:
        raise DatasetError("trace has no theta columns", path)
    indices = df['param_index'].unique()
    if len(indices) != 1:
        raise DatasetError("trace mixes parameters", path)
    return {
        'param_index': int(indices[0]),
        'taus': df['tau'].to_numpy(dtype=float),
        'thetas': df[theta_columns].to_numpy(dtype=float),
        'tau_linear': df['tau_linear'].to_numpy(dtype=float),
    }


def load_contour_csv(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    _require_columns(df, CONTOUR_COLUMNS, path)
    if not np.all(np.diff(df['point_index'].to_numpy()) == 1):
        raise DatasetError("contour points are not consecutive", path)
    return df


def load_band_csv(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, keep_default_na=True)
    _require_columns(df, BAND_COLUMNS, path)
    return df
