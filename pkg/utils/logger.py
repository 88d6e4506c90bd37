"""
Logging Configuration Module
Centralized logging setup shared by solvers, probes and the experiment runner
"""
import logging
import sys

from config.settings import config

_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def setup_logger(name: str) -> logging.Logger:
    """
    Create a logger with consistent formatting

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Only configure if handlers haven't been added yet; worker processes
    # re-import modules and must not stack duplicate handlers
    if not logger.handlers:
        level = getattr(logging, config.LOG_LEVEL)
        logger.setLevel(level)

        handler = logging.StreamHandler(sys.stdout)
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(_FORMAT, datefmt=_DATE_FORMAT))

        logger.addHandler(handler)
        logger.propagate = False

    return logger
