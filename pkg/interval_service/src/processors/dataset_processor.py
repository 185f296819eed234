"""
Dataset, expression and prediction-point loading for the interval service
"""
import itertools
import math
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from shared.mappers.value_mapper import apply_target_transform
from shared.models.data_models import Dataset
from shared.utils.file_utils import read_table, resolve_path
from shared.utils.model_loader import extract_model_definition, find_model
from ..core.errors import ConfigError, DatasetError
from ..utils.logger import get_logger


class DatasetProcessor:
    """Loads regression data, model expressions and prediction grids"""

    def __init__(self, base_dir: Optional[Path] = None):
        """
        Initialize DatasetProcessor

        Args:
            base_dir: Base directory for relative paths (defaults to BASE_DIR env var)
        """
        self.logger = get_logger('dataset-processor')
        self.base_dir = Path(base_dir or os.getenv('BASE_DIR', '.'))
        self.logger.debug(f"DatasetProcessor initialized with base_dir: {self.base_dir}")

    def resolve(self, path: str) -> Path:
        return resolve_path(path, self.base_dir)

    def read_frame(self, file_path: Path) -> pd.DataFrame:
        """
        Read a dataset file into a DataFrame

        Args:
            file_path: CSV or Excel file

        Returns:
            DataFrame with the header row as columns
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise DatasetError("file not found", file_path)
        self.logger.info(f"Reading file: {file_path.name}")
        try:
            df = read_table(file_path)
        except pd.errors.EmptyDataError:
            raise DatasetError("file is empty (a header row is required)", file_path)
        except (ValueError, OSError, pd.errors.ParserError) as e:
            raise DatasetError(str(e), file_path)
        self.logger.info(f"Successfully read {file_path.name}: shape={df.shape}")
        return df

    def _numeric_column(self, df: pd.DataFrame, column: str, file_path: Path) -> np.ndarray:
        raw = df[column]
        values = pd.to_numeric(raw.astype(str).str.strip(), errors='coerce').to_numpy(dtype=float)
        bad = np.nonzero(~np.isfinite(values))[0]
        if bad.size:
            row = int(bad[0])
            raise DatasetError(f"'{raw.iloc[row]}' is not a finite number", file_path,
                               line=row + 2, column=column)
        return values

    def load_dataset(self, data_path: str, target: str, variables: Optional[Sequence[str]] = None,
                     target_transform: str = 'none') -> Dataset:
        """
        Load a regression dataset

        Args:
            data_path: CSV/Excel path (relative to base_dir)
            target: Target column name
            variables: Input columns in model order (default: all other columns)
            target_transform: none, log, log10 or sqrt

        Returns:
            Validated Dataset
        """
        if not data_path:
            raise ConfigError("No dataset given (--data)")
        if not target:
            raise ConfigError("No target column given (--target)")
        file_path = self.resolve(data_path)
        df = self.read_frame(file_path)
        df.columns = [str(c).strip() for c in df.columns]

        if target not in df.columns:
            raise DatasetError(f"target column not found (columns: {list(df.columns)})", file_path,
                               column=target)
        variables = list(variables) if variables else [c for c in df.columns if c != target]
        for name in variables:
            if name not in df.columns:
                raise DatasetError(f"variable column not found (columns: {list(df.columns)})", file_path,
                                   column=name)
        if df.empty:
            raise DatasetError("dataset has no observations", file_path)

        X = np.column_stack([self._numeric_column(df, name, file_path) for name in variables]) \
            if variables else np.zeros((len(df), 0))
        y = self._numeric_column(df, target, file_path)
        try:
            y = apply_target_transform(y, target_transform)
        except ValueError as e:
            raise DatasetError(str(e), file_path, column=target)

        dataset = Dataset(X=X, y=y, columns=list(variables), target=target)
        self.logger.info(f"Dataset loaded: n={dataset.n}, variables={variables}, target={target} "
                         f"(transform: {target_transform})")
        return dataset

    def load_expression(self, expression: Optional[str], expression_file: Optional[str],
                        models_dir: str = 'models') -> Tuple[str, Optional[List[str]], Optional[str]]:
        """
        Resolve the model expression text

        Args:
            expression: Inline expression
            expression_file: .expr path or bundled model name

        Returns:
            Tuple of (expression text, declared variables, declared target); None where not declared
        """
        if expression:
            return expression, None, None
        if not expression_file:
            raise ConfigError("No model given (--expr or --expr-file)")
        path = self.resolve(expression_file)
        try:
            if path.exists():
                definition = extract_model_definition(path)
            else:
                definition = find_model(expression_file, self.resolve(models_dir))
        except (OSError, ValueError) as e:
            raise DatasetError(str(e), path)
        if definition is None:
            raise DatasetError("model file not found", path)
        self.logger.info(f"Model '{definition['name']}' loaded from {definition['path']}")
        return definition['expression'], definition['variables'], definition['target']

    def load_points(self, points: Optional[str], variables: Sequence[str]) -> np.ndarray:
        """
        Prediction points from a grid specification or a CSV file

        Args:
            points: 'name=start:stop:step,name=value' or a CSV path with variable columns
            variables: Model variables in order

        Returns:
            Matrix with one row per point
        """
        if not points:
            raise ConfigError("No prediction points given (--points)")
        candidate = self.resolve(points)
        if '=' not in points and candidate.exists():
            df = self.read_frame(candidate)
            df.columns = [str(c).strip() for c in df.columns]
            missing = [v for v in variables if v not in df.columns]
            if missing:
                raise DatasetError(f"points file lacks variables {missing}", candidate)
            return np.column_stack([self._numeric_column(df, v, candidate) for v in variables])
        return parse_grid(points, variables)


def _grid_axis(text: str, name: str) -> np.ndarray:
    parts = [p.strip() for p in text.split(':')]
    try:
        numbers = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"Invalid grid values '{text}' for {name}")
    if len(numbers) == 1:
        return np.array(numbers)
    if len(numbers) != 3:
        raise ConfigError(f"Grid for {name} must be 'value' or 'start:stop:step'")
    start, stop, step = numbers
    if step <= 0 or stop < start:
        raise ConfigError(f"Grid for {name} needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def parse_grid(spec: str, variables: Sequence[str]) -> np.ndarray:
    """Cartesian product of per-variable axes, rows in variable order"""
    axes: Dict[str, np.ndarray] = {}
    for item in spec.split(','):
        if not item.strip():
            continue
        if '=' not in item:
            raise ConfigError(f"Invalid grid item '{item}', expected name=start:stop:step")
        name, values = item.split('=', 1)
        name = name.strip()
        if name not in variables:
            raise ConfigError(f"Grid variable '{name}' is not a model variable {list(variables)}")
        axes[name] = _grid_axis(values, name)
    missing = [v for v in variables if v not in axes]
    if missing:
        raise ConfigError(f"Grid does not define {missing}")
    rows = list(itertools.product(*(axes[v] for v in variables)))
    return np.asarray(rows, dtype=float).reshape(len(rows), len(variables))
