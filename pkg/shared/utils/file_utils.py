import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

FLOAT_FORMAT = '%.17g'


def read_table(file_path: Path) -> pd.DataFrame:
    """Read a CSV (header row, comma, UTF-8) or Excel sheet into a DataFrame"""
    file_path = Path(file_path)
    file_extension = file_path.suffix.lower()
    if file_extension in [".xlsx", ".xls"]:
        return pd.read_excel(file_path, engine='openpyxl' if file_extension == ".xlsx" else 'xlrd')
    if file_extension in [".csv", ".txt", ""]:
        return pd.read_csv(file_path, sep=',', encoding='utf-8', dtype=str, keep_default_na=False)
    raise ValueError(f"Unsupported file type: {file_extension}")


def write_csv(df: pd.DataFrame, file_path: Path) -> Path:
    """Write with the fixed dialect: comma separated, '.' decimal, 17 significant digits"""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    return file_path


def _json_ready(value: Any) -> Any:
    """Convert numpy values; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(payload: Any, file_path: Path) -> Path:
    """JSON with shortest round-trip float repr (17 significant digits at most)"""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(_json_ready(payload), f, indent=2)
    return file_path


def read_json(file_path: Path) -> Any:
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def resolve_path(path: Optional[str], base_dir: Path) -> Optional[Path]:
    """Relative paths are taken relative to base_dir"""
    if path is None:
        return None
    candidate = Path(path)
    return candidate if candidate.is_absolute() else Path(base_dir) / candidate
