"""Console logging for the CLI and a per-run log file next to the run artifacts."""

from contextlib import contextmanager
import logging
import os
from typing import Generator

from rich.console import Console
from rich.logging import RichHandler
from rich.traceback import install as install_traceback


DEBUG_ENV_VAR = "KGALIGN_DEBUG"
RUN_LOG_FILE = "run.log"
RUN_LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"

# Chatty libraries; they only log below WARNING at -vvv
QUIET_LOGGERS = ("httpx", "httpcore")

VERBOSITY_LEVELS = (logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG)


logger = logging.getLogger(__name__)


def level_for(verbosity: int) -> int:
    return VERBOSITY_LEVELS[max(0, min(verbosity, len(VERBOSITY_LEVELS) - 1))]


def configure_logging(verbosity: int) -> None:
    """
    Route log records to stderr through rich.

    Arguments
    =========
    verbosity (int)
        Number of ``-v`` flags: errors only, then warnings, phase progress and debug detail.
        Counts above three stay at debug.
    """
    level = level_for(verbosity)
    debugging = DEBUG_ENV_VAR in os.environ
    handler = RichHandler(
        console=Console(stderr=True, markup=True),
        rich_tracebacks=debugging,
        tracebacks_show_locals=debugging,
        tracebacks_suppress=["numpy", "scipy", "httpx"],
        locals_max_length=4,
        markup=False,
    )
    handler.setLevel(level)

    # force: main() may run several times in one process
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.DEBUG if verbosity >= 3 else logging.WARNING)
    logger.debug("Logger configured with level %s", logging.getLevelName(level))

    if debugging:
        install_traceback(show_locals=True)
        logger.debug("Traceback handler installed.")


@contextmanager
def run_log(out_dir: str, level: int = logging.INFO) -> Generator[str, None, None]:
    """
    Copy the package's log records at ``level`` and above into ``<out_dir>/run.log`` while the
    block runs, whatever the console verbosity.  Yields the log path.
    """
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RUN_LOG_FILE)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT))

    package = logging.getLogger("kgalign")
    previous = package.level
    package.addHandler(handler)
    if package.getEffectiveLevel() > level:
        package.setLevel(level)
    try:
        yield path
    finally:
        package.removeHandler(handler)
        package.setLevel(previous)
        handler.close()
