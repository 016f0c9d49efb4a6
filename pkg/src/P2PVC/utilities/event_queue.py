"""
Priority queue of timed events for the discrete-event loops.

Events are ordered by integer time (ms), then priority, then a tie-break key. The tie-break is the insertion
sequence unless a shuffle generator is given, in which case equal (time, priority) events pop in random order.
"""
import heapq
import itertools
from typing import Any, List, Optional, Tuple

import numpy as np

# priorities at equal time
PROFILE = 0
PHYSICS = 1
GOSSIP_TICK = 2
DELIVERY = 3
REPLY_FLUSH = 4
LAMBDA_UPDATE = 5
SAMPLE = 6

Event = Tuple[int, int, float, int, str, Any]


class EventQueue:
    def __init__(self, tie_shuffle: Optional[np.random.Generator] = None) -> None:
        self._heap: List[Event] = []
        self._sequence = itertools.count()
        self._tie_shuffle = tie_shuffle

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time_ms: int, priority: int, kind: str, data: Any = None) -> None:
        """
        Schedule an event.

        Parameters:
        - time_ms (int): Absolute simulated time (ms).
        - priority (int): Order among events at the same time, lower first.
        - kind (str): Event type, dispatched by the loop.
        - data (Any): Payload handed back on pop.
        """
        tie = float(self._tie_shuffle.random()) if self._tie_shuffle is not None else 0.0
        heapq.heappush(self._heap, (int(time_ms), priority, tie, next(self._sequence), kind, data))

    def pop(self) -> Tuple[int, str, Any]:
        time_ms, _, _, _, kind, data = heapq.heappop(self._heap)
        return time_ms, kind, data

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None
