"""
YAML configuration loading for the interval service
"""
import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from shared.models.data_models import AnalysisConfig, FitOptions, ProfileOptions
from ..core.errors import ConfigError
from .logger import get_logger

logger = get_logger('config')

DEFAULTS: Dict[str, Any] = {
    'expression': None,
    'expression_file': None,
    'data': None,
    'target': None,
    'variables': [],
    'target_transform': 'none',
    'alphas': [0.05],
    'profile': {'step': 8.0, 'k_max': 30, 'tau_max_level': 0.01, 'max_restarts': 10},
    'optimizer': {'tol_f': 1e-10, 'tol_x': 1e-8, 'max_iters': 200},
    'points': None,
    'contour': {'alphas': [0.2, 0.5], 'steps': 100, 'pairs': 'all'},
    'output_directory': 'output',
    'output_formats': ['json', 'csv'],
    'logging': {'level': 'INFO'},
    'performance': {'max_workers': 4},
    'seed': None,
}

DEFAULT_CONFIG_FILE = Path('config') / 'analysis_config.yml'


def load_yaml(path: Path) -> Dict[str, Any]:
    """Read a YAML mapping; an empty file is an empty mapping"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            content = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"Configuration file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}")
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return content


def merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; None values in override are ignored"""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def parse_pairs(value: Any) -> Optional[List[Tuple[int, int]]]:
    """'all' -> None; '0-1,1-2' or [[0, 1], [1, 2]] -> list of pairs"""
    if value is None or (isinstance(value, str) and value.strip().lower() == 'all'):
        return None
    items = value.split(',') if isinstance(value, str) else value
    pairs = []
    for item in items:
        try:
            if isinstance(item, str):
                first, second = item.replace(':', '-').split('-')
            else:
                first, second = item
            pair = (int(first), int(second))
        except (TypeError, ValueError):
            raise ConfigError(f"Invalid parameter pair '{item}', expected 'i-j'")
        if pair[0] == pair[1] or min(pair) < 0:
            raise ConfigError(f"Invalid parameter pair {pair}")
        pairs.append(pair)
    return pairs


def _as_list(value: Any) -> List[Any]:
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(',') if v.strip()]
    return list(value)


def build_config(overrides: Optional[Dict[str, Any]] = None, config_file: Optional[Path] = None,
                 base_dir: Optional[Path] = None) -> AnalysisConfig:
    """
    Merge defaults < config/analysis_config.yml < config_file < overrides.

    Args:
        overrides: Values given on the command line (same keys as the YAML files)
        config_file: Analysis-specific YAML file
        base_dir: Directory that holds config/ (defaults to BASE_DIR)

    Returns:
        Validated AnalysisConfig
    """
    base_dir = Path(base_dir or os.getenv('BASE_DIR', '.'))
    settings = copy.deepcopy(DEFAULTS)

    default_file = base_dir / DEFAULT_CONFIG_FILE
    if default_file.exists():
        settings = merge(settings, load_yaml(default_file))
        logger.debug(f"Loaded defaults from {default_file}")
    if config_file is not None:
        config_path = Path(config_file)
        if not config_path.is_absolute() and not config_path.exists():
            config_path = base_dir / config_path
        settings = merge(settings, load_yaml(config_path))
        logger.info(f"Loaded configuration from {config_path}")
    settings = merge(settings, overrides or {})

    try:
        profile = ProfileOptions(
            step=float(settings['profile']['step']),
            k_max=int(settings['profile']['k_max']),
            tau_max_level=float(settings['profile']['tau_max_level']),
            max_restarts=int(settings['profile']['max_restarts']),
        )
        optimizer = FitOptions(
            tol_f=float(settings['optimizer']['tol_f']),
            tol_x=float(settings['optimizer']['tol_x']),
            max_iters=int(settings['optimizer']['max_iters']),
        )
        config = AnalysisConfig(
            expression=settings['expression'],
            expression_file=settings['expression_file'],
            data_path=settings['data'],
            target=settings['target'],
            variables=[str(v) for v in _as_list(settings['variables'])],
            target_transform=str(settings['target_transform']),
            alphas=[float(a) for a in _as_list(settings['alphas'])],
            profile=profile,
            optimizer=optimizer,
            points=settings['points'],
            contour_alphas=[float(a) for a in _as_list(settings['contour']['alphas'])],
            contour_steps=int(settings['contour']['steps']),
            pairs=parse_pairs(settings['contour'].get('pairs')),
            output_dir=str(settings['output_directory']),
            output_formats=[str(f).lower() for f in _as_list(settings['output_formats'])],
            max_workers=int(settings['performance']['max_workers']),
            log_level=str(settings['logging']['level']),
            seed=None if settings['seed'] is None else int(settings['seed']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid configuration value: {e}")

    validate_config(config)
    return config


def validate_config(config: AnalysisConfig) -> None:
    for alpha in config.alphas + config.contour_alphas:
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha values must lie in (0, 1), got {alpha}")
    if config.target is not None and config.target in config.variables:
        raise ConfigError(f"Target column '{config.target}' is also listed as a variable")
    if len(set(config.variables)) != len(config.variables):
        raise ConfigError(f"Duplicate variable names in {config.variables}")
    if config.contour_steps < 3:
        raise ConfigError("contour steps must be at least 3")
    if config.max_workers < 1:
        raise ConfigError("max_workers must be at least 1")
    unknown = set(config.output_formats) - {'json', 'csv'}
    if unknown:
        raise ConfigError(f"Unknown output formats {sorted(unknown)}")
