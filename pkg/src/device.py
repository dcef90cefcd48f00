import os
from typing import Optional

# Worker-thread count for rendering and evaluation; overridden by --threads
THREADS_ENV = "ULTRASR_THREADS"


def resolve_threads(requested: Optional[int] = None) -> int:
    """Explicit value, else $ULTRASR_THREADS, else the CPU count."""
    if requested is not None:
        if int(requested) < 1:
            raise ValueError(f"thread count must be >= 1, got {requested}")
        return int(requested)
    raw = os.getenv(THREADS_ENV, "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def name(requested: Optional[int] = None) -> str:
    return f"cpu x{resolve_threads(requested)}"
