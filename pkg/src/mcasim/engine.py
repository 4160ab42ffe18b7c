"""Slot-based discrete-event core.

Events are ordered lexicographically on ``(fire_slot, priority, seqno)``;
``seqno`` is a per-engine insertion counter, so dispatch order never depends
on hashing or container iteration order.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current slot."""


class EventDispatchError(RuntimeError):
    def __init__(self, event: "Event", cause: BaseException):
        super().__init__(f"handler failed for {event.describe()}: {cause!r}")
        self.event = event
        self.__cause__ = cause


@dataclass
class SlotClock:
    current_slot: int = 0
    slot_duration_ms: float = 1.0

    def __post_init__(self):
        if not self.slot_duration_ms > 0:
            raise ValueError("slot_duration_ms must be positive")

    def advance_to(self, slot: int):
        if slot < self.current_slot:
            raise SchedulingError(f"clock cannot move back from {self.current_slot} to {slot}")
        self.current_slot = slot

    def to_ms(self, slots) -> float:
        return slots * self.slot_duration_ms


@dataclass(order=True, frozen=True)
class Event:
    fire_slot: int
    priority: int
    seqno: int
    kind: str = field(compare=False)
    payload: Any = field(default=None, compare=False)

    def describe(self) -> str:
        return f"Event(slot={self.fire_slot}, prio={self.priority}, seq={self.seqno}, kind={self.kind})"


class Engine:
    """Single-threaded event dispatcher over an integer slot clock.

    Handlers are registered per event kind with :meth:`on` and called with the
    engine and the event.  With ``trace=True`` every dispatch is appended to
    :attr:`trace` as ``(slot, priority, seqno, kind)``.
    """

    def __init__(self, slot_duration_ms: float = 1.0, trace: bool = False):
        self.clock = SlotClock(0, slot_duration_ms)
        self._queue: list[Event] = []
        self._seqno = 0
        self._handlers: dict[str, Callable[["Engine", Event], None]] = {}
        self.trace: list[tuple] | None = [] if trace else None
        self.dispatched = 0

    @property
    def now(self) -> int:
        return self.clock.current_slot

    def __len__(self):
        return len(self._queue)

    def on(self, kind: str, handler: Callable[["Engine", Event], None]):
        self._handlers[kind] = handler

    def schedule(self, fire_slot: int, kind: str, payload: Any = None, priority: int = 0) -> Event:
        if fire_slot < self.clock.current_slot:
            raise SchedulingError(
                f"cannot schedule {kind!r} at slot {fire_slot}; clock is at {self.clock.current_slot}"
            )
        event = Event(int(fire_slot), int(priority), self._seqno, kind, payload)
        self._seqno += 1
        heapq.heappush(self._queue, event)
        return event

    def peek(self) -> Event | None:
        return self._queue[0] if self._queue else None

    def run_until(self, stop: int | None = None) -> int:
        """Dispatch every event with ``fire_slot <= stop`` (all events if ``stop`` is None).

        Returns the final clock value: ``stop`` when given, otherwise the slot
        of the last dispatched event.
        """
        queue = self._queue
        while queue and (stop is None or queue[0].fire_slot <= stop):
            event = heapq.heappop(queue)
            self.clock.advance_to(event.fire_slot)
            if self.trace is not None:
                self.trace.append((event.fire_slot, event.priority, event.seqno, event.kind))
            handler = self._handlers.get(event.kind)
            if handler is None:
                raise EventDispatchError(event, KeyError(f"no handler for kind {event.kind!r}"))
            try:
                handler(self, event)
            except EventDispatchError:
                raise
            except Exception as exc:
                raise EventDispatchError(event, exc) from exc
            self.dispatched += 1
        if stop is not None and stop > self.clock.current_slot:
            self.clock.advance_to(stop)
        return self.clock.current_slot
