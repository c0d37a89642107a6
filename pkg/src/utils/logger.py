"""Centralized logging configuration for syn2real."""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from src.config import LOG_FILENAME, LOG_LEVEL, LOG_MAX_FILE_SIZE_MB, LOG_BACKUP_COUNT, LOGGER_NAME, PROJECT_ROOT


def setup_logger(
    log_dir: Optional[Path] = None,
    level: str = LOG_LEVEL,
    console: bool = False
) -> logging.Logger:
    """Set up centralized logger with rotation.

    Args:
        log_dir: Directory for the rotating log file (defaults to <project>/logs)
        level: Logging level name
        console: Also echo records to stderr (used by the CLI)

    Returns:
        Logger instance that can be used throughout the application
    """
    # Create logs directory if it doesn't exist
    log_dir = Path(log_dir) if log_dir is not None else PROJECT_ROOT / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)

    log_path = log_dir / LOG_FILENAME

    # Get or create logger
    logger = logging.getLogger(LOGGER_NAME)

    # Convert string log level to logging constant
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    logger.setLevel(numeric_level)

    # Remove existing handlers to avoid duplicates
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    # Rotating file handler
    file_handler = RotatingFileHandler(
        log_path,
        maxBytes=LOG_MAX_FILE_SIZE_MB * 1024 * 1024,
        backupCount=LOG_BACKUP_COUNT
    )
    file_handler.setLevel(numeric_level)

    # Formatter with timestamp
    formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    if console:
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setLevel(numeric_level)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

    # Log initialization
    logger.info("=" * 60)
    logger.info("syn2real started")
    logger.info("=" * 60)

    return logger
