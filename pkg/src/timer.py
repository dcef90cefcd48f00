import logging
import time
from contextlib import contextmanager
from typing import Iterator, Optional

logger = logging.getLogger(__name__)


def format_duration(seconds: float) -> str:
    """Return a human-friendly duration string."""
    if seconds < 1:
        return f"{seconds * 1000:.1f} ms"
    return f"{seconds:.2f} s"


class Stopwatch:
    def __init__(self):
        self._t0 = time.perf_counter()
        self._stopped: Optional[float] = None

    @property
    def elapsed(self) -> float:
        end = self._stopped if self._stopped is not None else time.perf_counter()
        return end - self._t0

    def stop(self) -> float:
        if self._stopped is None:
            self._stopped = time.perf_counter()
        return self.elapsed


@contextmanager
def timer(name: Optional[str] = None) -> Iterator[Stopwatch]:
    """Context manager that yields a Stopwatch and logs elapsed time on exit.

    Usage:
        with timer('render x4') as sw:
            render(...)
        seconds = sw.elapsed
    """
    sw = Stopwatch()
    try:
        yield sw
    finally:
        sw.stop()
        label = f"{name} " if name else ""
        logger.debug("[TIMING] %stook %s", label, format_duration(sw.elapsed))
