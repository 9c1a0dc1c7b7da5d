"""Channels: locked FIFO queues carrying stamped token envelopes."""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Envelope:
    """A token in transit; uid identifies it, stamp orders its arrival."""

    uid: int
    stamp: int
    token: object


class Counter:
    """Thread-safe increment-and-get."""

    def __init__(self) -> None:
        self._n = 0
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            n = self._n
            self._n += 1
            return n

    def value(self) -> int:
        with self._lock:
            return self._n


class Channel:
    """FIFO with a soft capacity; producers and the consumer may run on
    different threads, so every access takes the lock."""

    def __init__(self, channel_id: str, capacity: int = 1024):
        self.channel_id = channel_id
        self.capacity = capacity
        self._q: deque[Envelope] = deque()
        self._lock = threading.Lock()

    def put(self, env: Envelope) -> None:
        with self._lock:
            self._q.append(env)

    def pop(self) -> Envelope:
        with self._lock:
            return self._q.popleft()

    def peek(self) -> Optional[object]:
        with self._lock:
            return self._q[0].token if self._q else None

    def __len__(self) -> int:
        with self._lock:
            return len(self._q)

    def full(self) -> bool:
        with self._lock:
            return len(self._q) >= self.capacity

    def drain(self) -> list[Envelope]:
        with self._lock:
            out = list(self._q)
            self._q.clear()
            return out
