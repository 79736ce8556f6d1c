"""Deterministic discrete-event scheduler.

Simulated time is an integer count of microseconds (ticks). All rates and
delays are rounded to ticks when they enter the simulator, so event ordering
never depends on floating-point arithmetic. Ties between events scheduled for
the same tick are broken by insertion order.
"""

import heapq
import random
from itertools import count

from quicsim.errors import ScheduleError

# Tick units: 1 tick = 1 microsecond.
US = 1
MS = 1000
SEC = 1_000_000


def ms(value):
    """Milliseconds to ticks, rounded."""
    return int(round(value * MS))


def sec(value):
    """Seconds to ticks, rounded."""
    return int(round(value * SEC))


class EventHandle:
    """Handle for a scheduled event; lets the owner cancel it."""

    __slots__ = ("fire_at", "seq", "action", "cancelled", "fired")

    def __init__(self, fire_at, seq, action):
        self.fire_at = fire_at
        self.seq = seq
        self.action = action
        self.cancelled = False
        self.fired = False

    @property
    def pending(self):
        return not (self.cancelled or self.fired)


class Simulator:
    """Single-threaded event loop with a seeded RNG.

    The RNG is the only source of randomness in a simulation; everything
    else is a pure function of the event sequence, which makes runs with
    the same configuration and seed byte-identical.
    """

    def __init__(self, seed=0):
        self.now = 0
        self.rng = random.Random(seed)
        self._heap = []
        self._seq = count()
        self.executed_events = 0

    def schedule(self, at, action):
        """Schedule `action` to run at tick `at`. Returns an EventHandle."""
        if at < self.now:
            raise ScheduleError(f"schedule at t={at} before current t={self.now}")
        handle = EventHandle(at, next(self._seq), action)
        heapq.heappush(self._heap, (at, handle.seq, handle))
        return handle

    def schedule_in(self, delay, action):
        return self.schedule(self.now + delay, action)

    def cancel(self, handle):
        """Cancel a pending event. Returns False if it already fired or was cancelled."""
        if handle is None or not handle.pending:
            return False
        handle.cancelled = True
        handle.action = None
        return True

    def run_until(self, t_end):
        """Execute every event with fire_at <= t_end in (fire_at, seq) order.

        Returns the time of the last executed event (current time if none ran).
        """
        last = self.now
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            _, _, handle = heapq.heappop(heap)
            if handle.cancelled:
                continue
            self.now = handle.fire_at
            handle.fired = True
            last = handle.fire_at
            self.executed_events += 1
            action = handle.action
            handle.action = None
            action()
        return last

    def run(self):
        """Run until the event queue is exhausted."""
        while self._heap:
            self.run_until(self._heap[0][0])
        return self.now

    @property
    def pending_events(self):
        return sum(1 for _, _, h in self._heap if h.pending)
