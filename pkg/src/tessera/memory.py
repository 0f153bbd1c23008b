"""Live-tensor accounting.

Every tensor produced by the sampling engine passes through :func:`track`.
While a :class:`MemoryTracker` is active, owned numpy buffers are counted on
creation and released (via ``weakref.finalize``) when the array is garbage
collected, so ``peak_bytes`` is the high-water mark of engine tensors alive at
the same time. Views share their base buffer and are not counted twice.
Temporaries created *inside* a single numpy expression are not observed.
"""

from __future__ import annotations

import threading
import weakref
from contextlib import contextmanager
from typing import Iterator, Optional

import numpy as np

_active: Optional["MemoryTracker"] = None
_active_lock = threading.Lock()


class MemoryTracker:
    def __init__(self):
        self._lock = threading.Lock()
        self.live_bytes = 0
        self.peak_bytes = 0
        self.allocations = 0

    def _alloc(self, nbytes: int) -> None:
        with self._lock:
            self.allocations += 1
            self.live_bytes += nbytes
            if self.live_bytes > self.peak_bytes:
                self.peak_bytes = self.live_bytes

    def _release(self, nbytes: int) -> None:
        with self._lock:
            self.live_bytes -= nbytes

    def register(self, arr: np.ndarray) -> np.ndarray:
        if arr.base is not None or arr.nbytes == 0:
            return arr
        nbytes = int(arr.nbytes)
        self._alloc(nbytes)
        weakref.finalize(arr, self._release, nbytes)
        return arr


def track(arr):
    """Register ``arr`` with the active tracker (no-op when none is active)."""
    tracker = _active
    if tracker is not None and isinstance(arr, np.ndarray):
        tracker.register(arr)
    return arr


def empty(shape, dtype=np.float64) -> np.ndarray:
    return track(np.empty(shape, dtype=dtype))


def zeros(shape, dtype=np.float64) -> np.ndarray:
    return track(np.zeros(shape, dtype=dtype))


@contextmanager
def tracking() -> Iterator[MemoryTracker]:
    """Activate a fresh tracker for the duration of the block.

    Trackers do not nest; entering a second one while another is active
    raises ``RuntimeError``.
    """
    global _active
    tracker = MemoryTracker()
    with _active_lock:
        if _active is not None:
            raise RuntimeError("a memory tracker is already active")
        _active = tracker
    try:
        yield tracker
    finally:
        with _active_lock:
            _active = None


def memory_probe(tracker: Optional[MemoryTracker] = None) -> int:
    """High-water mark of live tracked tensor bytes (active tracker by default)."""
    tracker = tracker or _active
    if tracker is None:
        raise RuntimeError("memory instrumentation is not enabled")
    return tracker.peak_bytes
