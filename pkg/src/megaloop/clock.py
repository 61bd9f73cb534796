"""Engine clocks: a monotonic wall clock and a jumpable virtual clock.

All engine timestamps come from one of these; tests inject the virtual
clock for exact, deterministic timing.
"""

from __future__ import annotations

import time


class MonotonicClock:
    """Monotonic seconds, re-anchorable so imported snapshots keep counting."""

    def __init__(self, start: float = 0.0):
        self._offset = start - time.monotonic()

    def now(self) -> float:
        return time.monotonic() + self._offset

    @property
    def virtual(self) -> bool:
        return False


class VirtualClock:
    """A clock that only moves when the engine loop advances it."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"clock moving backwards: {t} < {self._now}")
        self._now = t

    @property
    def virtual(self) -> bool:
        return True
