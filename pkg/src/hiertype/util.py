"""Small shared helpers."""

import os

from .errors import ConfigError


def worker_count():
    """Worker cap from HIERTYPE_THREADS; defaults to serial execution."""
    raw = os.environ.get("HIERTYPE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HIERTYPE_THREADS must be an integer, got {raw!r}") \
            from None
    if n < 1:
        raise ConfigError(f"HIERTYPE_THREADS must be >= 1, got {n}")
    return min(n, os.cpu_count() or 1)
