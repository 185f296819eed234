#!/usr/bin/env python3
"""
SR Interval Service
Confidence intervals, pairwise confidence regions and prediction intervals
for symbolic regression models, by linear approximation and likelihood profiles

Usage:
    python interval_service/src/main.py fit --config config/pcb_config.yml
    python interval_service/src/main.py report --config config/pcb_config.yml
    python interval_service/src/main.py gen-kotanchek --seed 1234
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to Python path
sys.path.append(str(Path(__file__).parent.parent.parent))

from interval_service.src.core.errors import (ConfigError, DatasetError, ExprError, FitError, IntervalError,
                                              JacobianError, ProfileError, QuantileError)
from interval_service.src.processors.analysis_processor import AnalysisProcessor, sample_kotanchek
from interval_service.src.utils.config_loader import build_config
from interval_service.src.utils.logger import setup_logger
from shared.utils.file_utils import write_csv

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NON_CONVERGED = 2
EXIT_PROFILE_FAILURE = 3

COMMANDS = ['fit', 'profile', 'contour', 'predict', 'report', 'gen-kotanchek']


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='interval-service',
        description='Confidence and prediction intervals for symbolic regression models')
    subparsers = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Analysis YAML file (merged over config/analysis_config.yml)')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--log-dir', help='Directory for the log file (default: $BASE_DIR/logs)')

    analysis = argparse.ArgumentParser(add_help=False, parents=[common])
    analysis.add_argument('--expr', help='Model expression, e.g. "-3.93*exp(-0.19*age) + 3.13"')
    analysis.add_argument('--expr-file', help='Model file (.expr) or bundled model name')
    analysis.add_argument('--data', help='Dataset (CSV or Excel, header row required)')
    analysis.add_argument('--target', help='Target column')
    analysis.add_argument('--vars', help='Comma-separated input columns in model order')
    analysis.add_argument('--target-transform', choices=['none', 'log', 'log10', 'sqrt'])
    analysis.add_argument('--alpha', type=float, action='append', help='Significance level (repeatable)')
    analysis.add_argument('--step', type=float, help='Profile step scale (default 8)')
    analysis.add_argument('--kmax', type=int, help='Maximum profile points per direction')
    analysis.add_argument('--tau-level', type=float, help='Level of the profile cut-off (default 0.01)')
    analysis.add_argument('--max-restarts', type=int, help='Maximum profiling restarts')
    analysis.add_argument('--max-iters', type=int, help='Optimizer iteration limit')
    analysis.add_argument('--tol-f', type=float, help='Relative SSR tolerance')
    analysis.add_argument('--tol-x', type=float, help='Relative step tolerance')
    analysis.add_argument('--points', help="Prediction grid 'x=0:10:0.5,y=1' or CSV file")
    analysis.add_argument('--format', action='append', choices=['json', 'csv'], help='Output format (repeatable)')
    analysis.add_argument('--workers', type=int, help='Concurrent profile jobs')
    analysis.add_argument('--pairs', help="Contour pairs 'all' or '0-1,1-2'")
    analysis.add_argument('--steps', type=int, help='Points per contour')

    subparsers.add_parser('fit', parents=[analysis], help='Fit the model and write the fit report')
    subparsers.add_parser('profile', parents=[analysis], help='Profile traces and parameter intervals')
    subparsers.add_parser('contour', parents=[analysis], help='Pairwise confidence region contours')
    subparsers.add_parser('predict', parents=[analysis], help='Linear and profile prediction bands')
    subparsers.add_parser('report', parents=[analysis], help='Fit, profiles, contours and predictions')
    subparsers.add_parser('gen-kotanchek', parents=[common], help='Generate Kotanchek training/test data')
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Map command-line flags onto configuration keys (None means not given)"""
    get = lambda name: getattr(args, name, None)
    return {
        'expression': get('expr'),
        'expression_file': get('expr_file'),
        'data': get('data'),
        'target': get('target'),
        'variables': get('vars'),
        'target_transform': get('target_transform'),
        'alphas': get('alpha'),
        'profile': {'step': get('step'), 'k_max': get('kmax'), 'tau_max_level': get('tau_level'),
                    'max_restarts': get('max_restarts')},
        'optimizer': {'max_iters': get('max_iters'), 'tol_f': get('tol_f'), 'tol_x': get('tol_x')},
        'points': get('points'),
        'contour': {'pairs': get('pairs'), 'steps': get('steps')},
        'output_directory': get('out'),
        'output_formats': get('format'),
        'logging': {'level': get('log_level')},
        'performance': {'max_workers': get('workers')},
        'seed': get('seed'),
    }


def generate_kotanchek(config, out: Path, logger) -> int:
    train, test = sample_kotanchek(config.seed)
    write_csv(train, out / 'kotanchek_train.csv')
    write_csv(test, out / 'kotanchek_test.csv')
    logger.info(f"✅ Kotanchek data written to {out} (train={len(train)}, test={len(test)}, seed={config.seed})")
    return EXIT_OK


def run_command(command: str, processor: AnalysisProcessor, logger) -> int:
    """Run one analysis command; the fit report is written even when profiling fails"""
    logger.info("\n" + "=" * 40)
    logger.info("STEP 1: Fitting Model")
    logger.info("=" * 40)
    state = processor.run_fit()

    try:
        if command in ('profile', 'contour', 'report'):
            logger.info("\n" + "=" * 40)
            logger.info("STEP 2: Likelihood Profiles")
            logger.info("=" * 40)
            processor.run_profile(state, with_contours=command != 'profile')
        if command in ('contour', 'report'):
            logger.info("\n" + "=" * 40)
            logger.info("STEP 3: Pairwise Contours")
            logger.info("=" * 40)
            processor.run_contour(state)
        if command == 'predict' or (command == 'report' and processor.config.points):
            logger.info("\n" + "=" * 40)
            logger.info("STEP 4: Prediction Intervals")
            logger.info("=" * 40)
            processor.run_predict(state)
    except ProfileError as e:
        logger.error(f"❌ Profile failure: {e}")
        processor.finish(state, markdown=command == 'report')
        return EXIT_PROFILE_FAILURE

    report = processor.finish(state, markdown=command == 'report')
    for warning in report.warnings:
        logger.warning(f"[{warning.code}] {warning.message}")
    if not state.fit.converged:
        logger.error("❌ Fit did not converge, partial report written")
        return EXIT_NON_CONVERGED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main interval workflow; returns the process exit code"""
    args = build_parser().parse_args(argv)
    base_dir = Path(os.environ.get("BASE_DIR", "."))

    try:
        config = build_config(overrides_from_args(args), args.config, base_dir)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    logger = setup_logger('interval-service', config.log_level,
                          log_dir=Path(args.log_dir) if args.log_dir else None)
    logger.info("=" * 60)
    logger.info(f"Starting SR Interval Service: {args.command}")
    logger.info("=" * 60)
    logger.info(f"Using base directory: {base_dir}")

    try:
        if args.command == 'gen-kotanchek':
            out = Path(args.out) if args.out else base_dir / 'data' / 'kotanchek'
            return generate_kotanchek(config, out, logger)
        processor = AnalysisProcessor(config, base_dir)
        code = run_command(args.command, processor, logger)
    except (ConfigError, DatasetError, ExprError, FitError, JacobianError, QuantileError) as e:
        logger.error(f"❌ Input error: {e}")
        return EXIT_INPUT_ERROR
    except ProfileError as e:
        logger.error(f"❌ Profile failure: {e}")
        return EXIT_PROFILE_FAILURE
    except IntervalError as e:
        logger.error(f"❌ Interval service failed: {e}", exc_info=True)
        return EXIT_INPUT_ERROR

    logger.info("\n" + "=" * 60)
    logger.info(f"SR Interval Service finished with exit code {code}")
    logger.info("=" * 60)
    return code


if __name__ == "__main__":
    sys.exit(main())
