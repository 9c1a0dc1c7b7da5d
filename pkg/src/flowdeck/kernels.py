"""Built-in kernel library.

Kernels are the user-supplied functions operators carry.  Programs defined
in JSON refer to kernels by name, so everything here is registered in
BUILTIN_KERNELS.  Python-built programs may pass ad-hoc Kernel objects.

Kernel kinds and their callable shapes:
    map        Record -> Record
    flat_map   Record -> list[Record]
    filter     Record -> bool
    fold       (Value, Value) -> Value            used by reduce/reduce_by_key
    stateful   (Value, Record) -> (Value, Record) used by map_with_state
    terminate  Multiset -> bool                   used by iterate
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .data import Multiset
from .values import Record, Value, canon_bytes

KERNEL_KINDS = {"map", "flat_map", "filter", "fold", "stateful", "terminate"}


@dataclass(frozen=True)
class Kernel:
    name: str
    kind: str
    fn: Callable
    # claimed algebraic contract for fold kernels; checked by the harness
    associative_commutative: bool = False

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, *args):
        return self.fn(*args)


def sorted_values(values: list[Value]) -> list[Value]:
    """Canonical order for a bag materialized as a list Value."""
    return sorted(values, key=canon_bytes)


# --- element transforms -----------------------------------------------------


def _split_words(r: Record) -> list[Record]:
    return [Record(None, w) for w in str(r.payload).split()]


def _pair_with_one(r: Record) -> Record:
    return Record(r.payload, 1)


def _square(r: Record) -> Record:
    return Record(r.key, r.payload * r.payload)


def _halve(r: Record) -> Record:
    return Record(r.key, r.payload / 2)


def _increment(r: Record) -> Record:
    return Record(r.key, r.payload + 1)


def _identity(r: Record) -> Record:
    return r


def _swap_pair(r: Record) -> Record:
    a, b = r.payload
    return Record(r.key, (b, a))


def _count_window(r: Record) -> Record:
    """Window record -> per-key occurrence counts within the window.

    The window payload is a list of member encodings (payload, or
    (key, payload) pairs for keyed members).  Output payload is a
    canonically sorted list of (member, count) pairs.
    """
    counts: dict[bytes, list] = {}
    for member in r.payload:
        c = canon_bytes(member)
        if c in counts:
            counts[c][1] += 1
        else:
            counts[c] = [member, 1]
    pairs = [(member, n) for member, n in counts.values()]
    return Record(r.key, sorted_values(pairs))


def _keep_odd(r: Record) -> bool:
    return r.payload % 2 == 1


def _keep_positive(r: Record) -> bool:
    return r.payload > 0


# --- folds -------------------------------------------------------------------


def _add(a: Value, b: Value) -> Value:
    return a + b


def _mul(a: Value, b: Value) -> Value:
    return a * b


def _vmax(a: Value, b: Value) -> Value:
    return a if a >= b else b


def _sub(a: Value, b: Value) -> Value:
    # deliberately non-associative; used to exercise contract checking
    return a - b


# --- stateful ----------------------------------------------------------------


def _running_count(state: Value, r: Record) -> tuple[Value, Record]:
    n = state + 1
    return n, Record(r.key, n)


def _running_sum(state: Value, r: Record) -> tuple[Value, Record]:
    s = state + r.payload
    return s, Record(r.key, s)


# --- termination predicates ----------------------------------------------------


def _all_below_one(batch: Multiset) -> bool:
    return all(r.payload < 1 for r in batch)


def _never(batch: Multiset) -> bool:
    return False


def _always(batch: Multiset) -> bool:
    return True


BUILTIN_KERNELS: dict[str, Kernel] = {
    k.name: k
    for k in [
        Kernel("split_words", "flat_map", _split_words),
        Kernel("pair_with_one", "map", _pair_with_one),
        Kernel("square", "map", _square),
        Kernel("halve", "map", _halve),
        Kernel("increment", "map", _increment),
        Kernel("identity", "map", _identity),
        Kernel("swap_pair", "map", _swap_pair),
        Kernel("count_window", "map", _count_window),
        Kernel("keep_odd", "filter", _keep_odd),
        Kernel("keep_positive", "filter", _keep_positive),
        Kernel("add", "fold", _add, associative_commutative=True),
        Kernel("mul", "fold", _mul, associative_commutative=True),
        Kernel("max", "fold", _vmax, associative_commutative=True),
        Kernel("sub", "fold", _sub, associative_commutative=False),
        Kernel("running_count", "stateful", _running_count),
        Kernel("running_sum", "stateful", _running_sum),
        Kernel("all_below_one", "terminate", _all_below_one),
        Kernel("never", "terminate", _never),
        Kernel("always", "terminate", _always),
    ]
}


def get_kernel(name: str) -> Kernel:
    try:
        return BUILTIN_KERNELS[name]
    except KeyError:
        raise KeyError(f"no built-in kernel named {name!r}") from None
