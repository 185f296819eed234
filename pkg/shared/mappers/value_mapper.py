from typing import Callable, Dict

import numpy as np

# Transforms applied to the target column before fitting
TARGET_TRANSFORMS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'none': lambda values: values,
    'log': np.log,
    'log10': np.log10,
    'sqrt': np.sqrt,
}


def get_target_transform(name: str) -> Callable[[np.ndarray], np.ndarray]:
    """Look up a target transform by name"""
    key = (name or 'none').strip().lower()
    if key not in TARGET_TRANSFORMS:
        raise ValueError(f"Unknown target transform '{name}', expected one of {sorted(TARGET_TRANSFORMS)}")
    return TARGET_TRANSFORMS[key]


def apply_target_transform(values: np.ndarray, name: str) -> np.ndarray:
    """
    Transform target values, rejecting entries that leave the domain.

    Raises:
        ValueError: naming the first offending row (0-based)
    """
    transform = get_target_transform(name)
    values = np.asarray(values, dtype=float)
    with np.errstate(all='ignore'):
        transformed = transform(values)
    bad = np.nonzero(~np.isfinite(transformed))[0]
    if bad.size:
        raise ValueError(f"{name} transform undefined for value {values[bad[0]]} in row {bad[0]}")
    return transformed
