"""
Logging setup shared by the command line and the acceptance harness.
"""

import sys
import logging
from typing import Optional

from pythonjsonlogger import jsonlogger

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
JSON_LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'


def setup_logging(log_level: str = "INFO", json_format: bool = False,
                  log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure the ``hdplan`` logger hierarchy.

    :param log_level: Level name (DEBUG, INFO, WARNING, ERROR)
    :param json_format: Emit one JSON object per record
    :param log_file: Optional file receiving the same records
    :return: The package logger
    """
    numeric_level = getattr(logging, str(log_level).upper(), None)
    if not isinstance(numeric_level, int):
        raise ValueError(f'Invalid log level: {log_level}')

    if json_format:
        formatter: logging.Formatter = jsonlogger.JsonFormatter(JSON_LOG_FORMAT)
    else:
        formatter = logging.Formatter(LOG_FORMAT)

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logger = logging.getLogger('hdplan')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(numeric_level)
    logger.propagate = False
    return logger
