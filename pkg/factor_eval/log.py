# factor_eval/log.py
import logging
import sys

from loguru import logger  # type: ignore

logger = logger.opt(colors=False)

# numerical libraries report through these stdlib loggers
_ROUTED_LOGGERS = ("py.warnings", "numpy", "scipy", "pandas")


class LoguruBridge(logging.Handler):
    """Forwards stdlib ``logging`` records into the loguru sink.

    The record keeps the stdlib caller's location: loguru is pointed at the
    first frame above the ``logging`` package.
    """

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level: str | int = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno
        logger.opt(depth=self._caller_depth(), exception=record.exc_info).log(
            level, record.getMessage()
        )

    @staticmethod
    def _caller_depth() -> int:
        depth = 0
        frame = sys._getframe(1)
        while frame.f_back is not None and frame.f_code.co_filename in (
            logging.__file__,
            __file__,
        ):
            frame = frame.f_back
            depth += 1
        return depth


def configure_logging(log_level) -> None:
    """Points every log record of a run at one stderr sink.

    Args:
        log_level (str | LogLevel): Minimum level shown, e.g. "DEBUG" or "INFO".

    The sink is queued so Monte Carlo worker threads can write to it at the
    same time. Numerical warnings from numpy, scipy and pandas go through the
    same sink at WARNING level.
    """
    level = getattr(log_level, "value", log_level)
    logger.remove()
    logger.add(sys.stderr, level=level, enqueue=True, backtrace=False, diagnose=False)

    bridge = LoguruBridge()
    logging.basicConfig(handlers=[bridge], level=0, force=True)
    for name in _ROUTED_LOGGERS:
        routed = logging.getLogger(name)
        routed.handlers = [bridge]
        routed.propagate = False
    logging.captureWarnings(True)

    logger.debug(f"logging configured at {level}")
