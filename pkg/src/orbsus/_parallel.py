"""Worker-count policy shared by the compiled k-loops."""

from __future__ import annotations

import os


def worker_count() -> int:
    """Worker cap from ``ORBSUS_THREADS`` (default: CPU count)."""
    env = os.environ.get("ORBSUS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
