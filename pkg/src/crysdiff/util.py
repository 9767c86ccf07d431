"""Small shared helpers."""

from __future__ import annotations

import os


def worker_count() -> int:
    """Worker-pool size cap; the CRYSDIFF_THREADS environment variable wins."""
    raw = os.environ.get("CRYSDIFF_THREADS")
    if raw is not None:
        try:
            return max(1, int(raw))
        except ValueError:
            return 1
    return max(1, min(os.cpu_count() or 1, 8))
