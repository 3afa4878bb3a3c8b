import logging
import sys
from typing import Optional

from core.config import settings

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(threadName)s | %(message)s"

logger = logging.getLogger("riskgrid")


def configure(level: Optional[str] = None) -> logging.Logger:
    """Attach the stdout handler once and set the level (RISKGRID_LOG_LEVEL by default)"""
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    name = (level or settings.log_level).upper()
    logger.setLevel(getattr(logging, name, logging.INFO))
    return logger


configure()
