"""Structural checks over execution traces.

Each checker returns a list of violation strings; an empty list means the
trace satisfies the property.  The checks only use event order (`seq`),
never wall-clock time, so they are exact.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Optional

from .runtime.tracing import TraceEvent


def check_conservation(events: list[TraceEvent]) -> list[str]:
    """Every token sent on a channel is received there exactly once."""
    sent: dict[str, list[int]] = defaultdict(list)
    got: dict[str, list[int]] = defaultdict(list)
    for e in events:
        if e.kind == "send":
            sent[e.channel].append(e.token)
        elif e.kind == "receive":
            got[e.channel].append(e.token)
    out = []
    for cid in sorted(set(sent) | set(got)):
        if sorted(sent[cid]) != sorted(got[cid]):
            out.append(
                f"channel {cid}: {len(sent[cid])} sends vs "
                f"{len(got[cid])} receives do not pair up"
            )
    return out


def check_fifo(events: list[TraceEvent]) -> list[str]:
    """Tokens leave each channel in the order they entered it."""
    sent: dict[str, list[int]] = defaultdict(list)
    got: dict[str, list[int]] = defaultdict(list)
    for e in events:
        if e.kind == "send":
            sent[e.channel].append(e.token)
        elif e.kind == "receive":
            got[e.channel].append(e.token)
    out = []
    for cid, uids in sorted(got.items()):
        order = {uid: i for i, uid in enumerate(sent[cid])}
        ranks = [order[u] for u in uids if u in order]
        if ranks != sorted(ranks):
            out.append(f"channel {cid}: receive order deviates from send order")
    return out


def check_barrier_ordering(events: list[TraceEvent]) -> list[str]:
    """Staged runs keep stages disjoint inside every round: all tasks of
    stage s end before any task of stage s+1 starts, and the barrier
    events bracket them."""
    out = []
    open_stage: Optional[tuple[int, int]] = None
    last_end: dict[tuple[int, int], int] = {}
    first_start: dict[tuple[int, int], int] = {}
    rounds: set[int] = set()
    for e in events:
        if e.kind == "barrier_enter":
            if open_stage is not None:
                out.append(
                    f"seq {e.seq}: barrier_enter{(e.stage, e.superstep)} "
                    f"inside open stage {open_stage}"
                )
            open_stage = (e.stage, e.superstep)
            rounds.add(e.superstep)
        elif e.kind == "barrier_exit":
            if open_stage != (e.stage, e.superstep):
                out.append(
                    f"seq {e.seq}: barrier_exit{(e.stage, e.superstep)} "
                    f"does not match open stage {open_stage}"
                )
            open_stage = None
        elif e.kind in ("task_start", "task_end") and e.stage is not None:
            key = (e.stage, e.superstep)
            if e.kind == "task_start":
                first_start.setdefault(key, e.seq)
                if open_stage != key:
                    out.append(
                        f"seq {e.seq}: stage {e.stage} task ran outside its "
                        f"barrier window"
                    )
            else:
                last_end[key] = e.seq
    for r in sorted(rounds):
        stages = sorted({s for s, rr in last_end if rr == r})
        for s in stages:
            nxt = (s + 1, r)
            if nxt in first_start and last_end.get((s, r), -1) > first_start[nxt]:
                out.append(
                    f"round {r}: stage {s} still ending after stage "
                    f"{s + 1} started"
                )
    return out


def pipelining_overlap(
    events: list[TraceEvent],
    upstream: Iterable[str],
    downstream: Iterable[str],
) -> bool:
    """True when some downstream task starts before the last upstream task
    ends, i.e. the two actor sets ran concurrently."""
    up = set(upstream)
    down = set(downstream)
    last_up_end = max(
        (e.seq for e in events if e.kind == "task_end" and e.actor in up),
        default=-1,
    )
    first_down_start = min(
        (e.seq for e in events if e.kind == "task_start" and e.actor in down),
        default=None,
    )
    return first_down_start is not None and first_down_start < last_up_end


def superstep_spans(events: list[TraceEvent]) -> dict[int, list[tuple[int, int, int]]]:
    """Per tag: (superstep, begin seq, end seq) of each loop pass."""
    spans: dict[int, list[tuple[int, int, int]]] = defaultdict(list)
    open_at: dict[tuple[int, int], int] = {}
    for e in events:
        if e.kind == "superstep_begin":
            open_at[(e.tag, e.superstep)] = e.seq
        elif e.kind == "superstep_end":
            begin = open_at.pop((e.tag, e.superstep), None)
            if begin is not None:
                spans[e.tag].append((e.superstep, begin, e.seq))
    return dict(spans)


def check_superstep_serialization(events: list[TraceEvent]) -> list[str]:
    """Barrier-strategy loops keep at most one superstep open at a time."""
    depth = 0
    out = []
    for e in events:
        if e.kind == "superstep_begin":
            depth += 1
            if depth > 1:
                out.append(
                    f"seq {e.seq}: superstep of tag {e.tag} opened while "
                    f"another was in flight"
                )
        elif e.kind == "superstep_end":
            depth -= 1
    return out


def concurrent_tags(events: list[TraceEvent]) -> bool:
    """True when supersteps of two different tags are open at once."""
    open_tags: set[int] = set()
    for e in events:
        if e.kind == "superstep_begin":
            if any(t != e.tag for t in open_tags):
                return True
            open_tags.add(e.tag)
        elif e.kind == "superstep_end":
            open_tags.discard(e.tag)
    return False


def check_trace(events: list[TraceEvent], staged: bool = False) -> list[str]:
    """The standard bundle: conservation and FIFO always, barrier
    structure for staged runs."""
    out = check_conservation(events) + check_fifo(events)
    if staged:
        out += check_barrier_ordering(events)
    return out
