"""Discrete-event plumbing: event kinds, events and a stable priority queue."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from enum import Enum


class EventKind(Enum):
    SENSOR_ARRIVAL = "SensorArrival"
    SENSOR_DEPARTURE = "SensorDeparture"
    PROVISION_VM_DONE = "ProvisionVmDone"
    PROVISION_CONTAINER_DONE = "ProvisionContainerDone"
    BEAT = "Beat"
    CONTROL_TICK = "ControlTick"
    INSTANCE_FAILURE = "InstanceFailure"


# Same-timestamp ordering: everything else first, then beats, then the
# control tick, so decisions see fresh metrics.
_PRIORITY = {EventKind.BEAT: 1, EventKind.CONTROL_TICK: 2}


@dataclass(frozen=True)
class SimEvent:
    at: float
    kind: EventKind
    payload: dict = field(default_factory=dict, compare=False, hash=False)


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def push(self, event: SimEvent) -> None:
        if event.at < 0:
            raise ValueError("events cannot be scheduled before time 0")
        heapq.heappush(
            self._heap, (event.at, _PRIORITY.get(event.kind, 0), next(self._seq), event)
        )

    def extend(self, events) -> None:
        for e in events:
            self.push(e)

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)[-1]

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else float("inf")

    def __len__(self) -> int:
        return len(self._heap)
