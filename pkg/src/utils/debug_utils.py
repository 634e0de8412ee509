import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, MutableMapping, Optional

from logger_tt import logger, setup_logging

LOGGING_SETUP = False


def debug_enabled() -> bool:
    # Read on every call so a .env loaded after import still applies.
    return os.environ.get("DEBUG", "0") == "1"


def init_logging(out_dir: Optional[str] = None):
    """Routes logger_tt output to `<out_dir>/tape.log` (once per process)."""
    global LOGGING_SETUP
    if LOGGING_SETUP:
        return
    log_dir = Path(out_dir) if out_dir else Path(".")
    log_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(log_path=str(log_dir / "tape.log"))
    LOGGING_SETUP = True


def debug_print(*args, **kwargs):
    if debug_enabled():
        init_logging(os.environ.get("TAPE_OUT_DIR"))
        logger.debug(*args, **kwargs)


@contextmanager
def timed(phase: str, timings: MutableMapping[str, float]) -> Iterator[None]:
    """Adds the monotonic wall-clock duration of the block to `timings[phase]`."""
    start = time.monotonic()
    logger.info(f"[{phase}] starting")
    try:
        yield
    finally:
        elapsed = time.monotonic() - start
        timings[phase] = timings.get(phase, 0.0) + elapsed
        logger.info(f"[{phase}] done in {elapsed:.3f}s")
