"""Deterministic discrete-event engine on an integer millisecond clock."""

from __future__ import annotations

import heapq
from enum import IntEnum
from typing import Any, Callable, NamedTuple


class Priority(IntEnum):
    """Dispatch order among events sharing a timestamp."""

    COMPLETION = 0
    SCHEDULER_TICK = 1
    LEASE_TIMER = 2
    SUBMISSION = 3


class EventKind(IntEnum):
    JOB_COMPLETE = 0
    SCHEDULER_TICK = 1
    LEASE_TIMER_TICK = 2
    JOB_SUBMIT = 3
    ENV_CREATE = 4
    ENV_DESTROY = 5


DEFAULT_PRIORITY = {
    EventKind.JOB_COMPLETE: Priority.COMPLETION,
    EventKind.SCHEDULER_TICK: Priority.SCHEDULER_TICK,
    EventKind.LEASE_TIMER_TICK: Priority.LEASE_TIMER,
    EventKind.JOB_SUBMIT: Priority.SUBMISSION,
    EventKind.ENV_CREATE: Priority.SUBMISSION,
    EventKind.ENV_DESTROY: Priority.SUBMISSION,
}


class Event(NamedTuple):
    time: int
    priority: int
    seq: int
    kind: int
    payload: Any = None


class CausalityError(RuntimeError):
    pass


class HandlerFault(RuntimeError):
    """A handler raised; the engine stops with its state intact."""

    def __init__(self, event: Event, cause: BaseException):
        super().__init__(f"handler for {EventKind(event.kind).name} at t={event.time} failed: {cause!r}")
        self.event = event


class Engine:
    def __init__(self, log: bool = False):
        self.clock = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.handlers: dict[int, Callable[[Event], None]] = {}
        self.dispatched = 0
        self.log: list[str] | None = [] if log else None

    def __len__(self):
        return len(self._queue)

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self.handlers[kind] = handler

    def schedule(self, time: int, kind: EventKind, payload: Any = None,
                 priority: int | None = None) -> Event:
        if time < self.clock:
            raise CausalityError(f"event {EventKind(kind).name} at t={time} is before clock {self.clock}")
        if priority is None:
            priority = DEFAULT_PRIORITY[kind]
        ev = Event(time, priority, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_event(self, ev: Event) -> Event:
        """Enqueue a prebuilt event; its seq is replaced by the engine's counter."""
        return self.schedule(ev.time, EventKind(ev.kind), ev.payload, ev.priority)

    def peek(self) -> Event | None:
        return self._queue[0] if self._queue else None

    def pop_next(self) -> Event | None:
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.clock = ev.time
        return ev

    def run(self, until: int) -> "Engine":
        if until < self.clock:
            raise CausalityError(f"run(until={until}) is before clock {self.clock}")
        queue = self._queue
        handlers = self.handlers
        log = self.log
        pop = heapq.heappop
        while queue and queue[0].time <= until:
            ev = pop(queue)
            self.clock = ev.time
            if log is not None:
                log.append(f"{ev.time} {ev.priority} {ev.seq} {EventKind(ev.kind).name}")
            try:
                handlers[ev.kind](ev)
            except Exception as exc:
                raise HandlerFault(ev, exc) from exc
            self.dispatched += 1
        self.clock = until
        return self
