"""Collections, stream chunks, windows, and the token kinds channels carry."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional, Sequence

from .errors import InvalidArgument
from .values import Record, Value, record_canon, record_to_json


class Multiset:
    """An unordered bag of Records.

    The internal tuple preserves whatever order records arrived in, purely
    as an implementation detail; equality and hashing of the bag ignore it.
    Operators must never let that order leak into results.
    """

    __slots__ = ("records",)

    def __init__(self, records: Iterable[Record] = ()):
        self.records: tuple[Record, ...] = tuple(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Multiset):
            return NotImplemented
        return self.counter() == other.counter()

    def __repr__(self) -> str:
        return f"Multiset({list(self.records)!r})"

    def counter(self) -> Counter:
        return Counter(record_canon(r) for r in self.records)

    def canonical(self) -> tuple[Record, ...]:
        """Records sorted by canonical encoding; the bag's normal form."""
        return tuple(sorted(self.records, key=record_canon))

    def to_json(self) -> list:
        return [record_to_json(r) for r in self.canonical()]


def bag_equal(a: Iterable[Record], b: Iterable[Record]) -> bool:
    """True iff a and b contain the same records with the same multiplicities."""
    ca = Counter(record_canon(r) for r in a)
    cb = Counter(record_canon(r) for r in b)
    return ca == cb


@dataclass(frozen=True)
class StreamChunk:
    """One micro-batch of a discretized stream; seq numbers are dense from 0."""

    seq: int
    batch: Multiset


def discretize(records: Sequence[Record], batch_size: int) -> list[StreamChunk]:
    """Cut an ordered record sequence into consecutive chunks of batch_size.

    The final chunk may be shorter.  Empty input yields no chunks at all;
    an empty chunk is never produced here (operators downstream may still
    emit empty batches of their own).
    """
    if batch_size < 1:
        raise InvalidArgument(f"batch_size must be >= 1, got {batch_size}")
    chunks = []
    for i in range(0, len(records), batch_size):
        chunks.append(StreamChunk(len(chunks), Multiset(records[i : i + batch_size])))
    return chunks


@dataclass(frozen=True)
class WindowSpec:
    """Count-based sliding window: size elements, advancing by slide."""

    size: int
    slide: int

    def __post_init__(self):
        if self.size < 1:
            raise InvalidArgument(f"window size must be >= 1, got {self.size}")
        if self.slide < 1:
            raise InvalidArgument(f"window slide must be >= 1, got {self.slide}")
        if self.slide > self.size:
            raise InvalidArgument(
                f"slide ({self.slide}) must not exceed size ({self.size}); gaps are not allowed"
            )


def windows(records: Sequence[Record], spec: WindowSpec) -> list[Multiset]:
    """All full windows over the sequence.

    Window i covers positions [i*slide, i*slide + size).  Only complete
    windows are emitted, so fewer than `size` records yields none.
    """
    out = []
    start = 0
    while start + spec.size <= len(records):
        out.append(Multiset(records[start : start + spec.size]))
        start += spec.slide
    return out


# ---------------------------------------------------------------------------
# Tokens.  A channel carries exactly one data kind (collection, micro-batch,
# or tuple) plus, optionally, control and end-of-stream markers.  State
# tokens only ever travel on an actor's own feedback loop.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollectionToken:
    batch: Multiset
    tag: Optional[int] = None
    tag_seq: Optional[int] = None


@dataclass(frozen=True)
class MicroBatchToken:
    chunk: StreamChunk
    tag: Optional[int] = None
    tag_seq: Optional[int] = None


@dataclass(frozen=True)
class TupleToken:
    record: Record
    tag: Optional[int] = None
    tag_seq: Optional[int] = None


@dataclass(frozen=True)
class ControlToken:
    tag: int


@dataclass(frozen=True)
class EndOfStream:
    pass


@dataclass(frozen=True)
class StateToken:
    value: Value


Token = Any  # union of the six classes above

EOS = EndOfStream()

_DATA_KINDS = {
    CollectionToken: "collection",
    MicroBatchToken: "microbatch",
    TupleToken: "tuple",
}


def token_kind(tok: Token) -> str:
    if isinstance(tok, CollectionToken):
        return "collection"
    if isinstance(tok, MicroBatchToken):
        return "microbatch"
    if isinstance(tok, TupleToken):
        return "tuple"
    if isinstance(tok, ControlToken):
        return "control"
    if isinstance(tok, EndOfStream):
        return "eos"
    if isinstance(tok, StateToken):
        return "state"
    raise TypeError(f"not a token: {tok!r}")


def is_data(tok: Token) -> bool:
    return isinstance(tok, (CollectionToken, MicroBatchToken, TupleToken))


def token_to_json(tok: Token) -> Any:
    """Canonical JSON form of a token; bags are sorted so two bag-equal
    collection tokens always serialize to identical bytes."""
    if isinstance(tok, CollectionToken):
        return {"kind": "collection", "records": tok.batch.to_json()}
    if isinstance(tok, MicroBatchToken):
        return {
            "kind": "microbatch",
            "seq": tok.chunk.seq,
            "records": tok.chunk.batch.to_json(),
        }
    if isinstance(tok, TupleToken):
        return {"kind": "tuple", "record": record_to_json(tok.record)}
    if isinstance(tok, ControlToken):
        return {"kind": "control", "tag": tok.tag}
    if isinstance(tok, EndOfStream):
        return {"kind": "eos"}
    raise TypeError(f"cannot serialize token: {tok!r}")
