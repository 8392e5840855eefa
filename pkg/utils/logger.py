"""
Logging utility for the reversibility toolkit.

Provides centralized logging configuration and setup.
"""

import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional, Set


LOG_LEVEL_ENV = 'QREV_LOG_LEVEL'
LOG_DIR_ENV = 'QREV_LOG_DIR'

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Names of loggers configured through setup_logger
_CONFIGURED: Set[str] = set()


def resolve_log_level(level: Optional[str] = None) -> int:
    """
    Turn a level name (or the environment default) into a logging constant.

    Args:
        level: Level name such as "DEBUG"; falls back to QREV_LOG_LEVEL, then INFO

    Returns:
        Logging level constant
    """
    name = (level or os.environ.get(LOG_LEVEL_ENV) or 'INFO').upper()
    return getattr(logging, name, logging.INFO)


def _file_handler(log_dir: str, log_level: int) -> logging.FileHandler:
    """Create the daily file handler inside log_dir."""
    logs_path = Path(log_dir)
    logs_path.mkdir(parents=True, exist_ok=True)
    log_file = logs_path / f'app_{datetime.now().strftime("%Y%m%d")}.log'
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setLevel(log_level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logger(
    name: str,
    log_level: Optional[int] = None,
    log_dir: Optional[str] = None
) -> logging.Logger:
    """
    Set up and configure a logger instance.

    Args:
        name: Logger name (typically __name__ of the calling module)
        log_level: Logging level (default: from QREV_LOG_LEVEL, else INFO)
        log_dir: Directory for the daily log file (default: QREV_LOG_DIR;
            no file logging when neither is set)

    Returns:
        Configured logger instance
    """
    if log_level is None:
        log_level = resolve_log_level()

    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    _CONFIGURED.add(name)

    # Avoid adding multiple handlers if logger already configured
    if logger.handlers:
        return logger

    log_dir = log_dir or os.environ.get(LOG_DIR_ENV)
    if log_dir:
        logger.addHandler(_file_handler(log_dir, log_level))

    # Console handler - reports go to files, diagnostics go to stderr
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(console_handler)

    return logger


def apply_log_settings(level: Optional[str] = None, log_dir: Optional[str] = None) -> None:
    """
    Re-apply level and file output to every logger created by setup_logger.

    Args:
        level: Level name for all configured loggers
        log_dir: Directory for the daily log file (added where missing)
    """
    log_level = resolve_log_level(level)
    for name in sorted(_CONFIGURED):
        logger = logging.getLogger(name)
        logger.setLevel(log_level)
        has_file = any(isinstance(h, logging.FileHandler) for h in logger.handlers)
        if log_dir and not has_file:
            logger.addHandler(_file_handler(log_dir, log_level))
        for handler in logger.handlers:
            handler.setLevel(log_level)
