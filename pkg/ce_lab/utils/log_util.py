import logging
import os

_PACKAGE = "ce_lab"


def _default_level() -> int:
    name = os.getenv("CE_LAB_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def configure_logger(name):
    logger = logging.getLogger(name)
    logger.setLevel(_default_level())

    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setLevel(logging.DEBUG)
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        # Each module logger owns a handler; stop records reaching the root twice.
        logger.propagate = False

    return logger


def set_log_level(level):
    """Apply ``level`` to every logger already created under the ce_lab namespace."""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if isinstance(logger, logging.Logger) and (name == _PACKAGE or name.startswith(_PACKAGE + ".")):
            logger.setLevel(level)
