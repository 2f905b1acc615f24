"""Process-level performance tuning for the hot numeric paths.

The training update and the batched simulator allocate multi-megabyte numpy
temporaries thousands of times per second. With glibc's default malloc
settings those exceed the mmap threshold, so every temporary is a fresh
mmap/munmap pair and its page faults dominate the arithmetic (dramatically so
under hypervised sandboxes). Raising the mmap and trim thresholds keeps the
buffers on the reusable heap; on systems without glibc this is a no-op.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator() -> bool:
    """Raise glibc's mmap/trim thresholds once per process; True on success."""
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30) == 1
        ok = libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30) == 1 and ok
    except (OSError, AttributeError):
        return False
    _done = ok
    return ok
