"""Execution traces: a thread-safe collector and a JSONL serialization.

Every observable runtime action lands here as one event.  The sequence
number totally orders events; wall_ns is monotonic and only meaningful
within one run.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from typing import Optional

KINDS = (
    "task_start",
    "task_end",
    "send",
    "receive",
    "barrier_enter",
    "barrier_exit",
    "superstep_begin",
    "superstep_end",
)


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    wall_ns: int
    kind: str
    actor: Optional[str] = None
    channel: Optional[str] = None
    worker: Optional[str] = None
    stage: Optional[int] = None
    superstep: Optional[int] = None
    tag: Optional[int] = None
    task: Optional[str] = None
    token: Optional[int] = None
    tkind: Optional[str] = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class TraceCollector:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._events: list[TraceEvent] = []
        self._lock = threading.Lock()
        self._t0 = time.monotonic_ns()

    def emit(self, kind: str, **fields) -> None:
        if not self.enabled:
            return
        assert kind in KINDS, kind
        with self._lock:
            ev = TraceEvent(
                seq=len(self._events),
                wall_ns=time.monotonic_ns() - self._t0,
                kind=kind,
                **fields,
            )
            self._events.append(ev)

    def events(self) -> list[TraceEvent]:
        with self._lock:
            return list(self._events)


def trace_to_jsonl(events: list[TraceEvent]) -> str:
    return "\n".join(json.dumps(e.to_json(), sort_keys=True) for e in events)


def trace_from_jsonl(text: str) -> list[TraceEvent]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        out.append(TraceEvent(**d))
    return out
