"""
Logging utility for the interval service
"""
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional

ROOT_LOGGER = 'interval-service'


def setup_logger(name: str = ROOT_LOGGER, level: str = 'INFO',
                 log_dir: Optional[Path] = None, to_file: bool = True) -> logging.Logger:
    """
    Set up logging for a CLI run.

    Args:
        name: Logger name
        level: Logging level (DEBUG, INFO, WARNING, ERROR)
        log_dir: Directory for the log file (defaults to $BASE_DIR/logs)
        to_file: Attach the timestamped file handler

    Returns:
        Configured logger instance
    """
    numeric_level = getattr(logging, str(level).upper(), logging.INFO)

    logger = logging.getLogger(name)
    logger.setLevel(numeric_level)
    if logger.handlers:
        logger.handlers.clear()

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
    )
    simple_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler()
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(simple_formatter)
    logger.addHandler(console_handler)

    log_file = None
    if to_file:
        log_dir = Path(log_dir) if log_dir is not None else Path(os.getenv('BASE_DIR', '.')) / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = log_dir / f"{name}_{timestamp}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(detailed_formatter)
        logger.addHandler(file_handler)

    # numerical modules log under their package names
    core_logger = logging.getLogger('interval_service')
    core_logger.setLevel(numeric_level)
    core_logger.handlers = list(logger.handlers)
    core_logger.propagate = False

    logger.info(f"Logger initialized. Log file: {log_file}" if log_file else "Logger initialized")
    return logger


def get_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """
    Get a logger below the service logger.

    Args:
        name: Component name, e.g. 'dataset-processor'

    Returns:
        Logger instance
    """
    if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + '.'):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
