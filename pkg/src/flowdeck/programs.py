"""The verification corpus: small programs with random input generators.

Each entry builds a fresh program (or topology) plus random inputs sized
for fast runs.  The harness sweeps these across engines and schedules and
compares every run against the single-threaded evaluator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .data import Multiset, StreamChunk, WindowSpec
from .kernels import get_kernel
from .logical import LogicalProgram, Mode
from .topology import Topology
from .values import Record

_WORDS = ("ash", "birch", "cedar", "elm", "fir", "oak", "pine", "yew")
_KEYS = (["k", "a"], ["k", "b"], ["k", "c"])


# -- bolt kernels -------------------------------------------------------------------


def forward_bolt(inputs, emit, state) -> None:
    for _, r in inputs:
        emit(r)


def pair_ports_bolt(inputs, emit, state) -> None:
    """Zip one record per port into a single pair record."""
    payloads = [r.payload for _, r in inputs]
    emit(Record(None, payloads if len(payloads) > 1 else payloads[0]))


NAMED_BOLTS: dict[str, Callable] = {
    "forward": forward_bolt,
    "pair_ports": pair_ports_bolt,
}


# -- program builders ---------------------------------------------------------------


def build_wordcount() -> LogicalProgram:
    p = LogicalProgram(Mode.BATCH, name="wordcount")
    src = p.source("lines")
    words = p.flat_map(src, get_kernel("split_words"))
    pairs = p.map(words, get_kernel("pair_with_one"))
    counts = p.reduce_by_key(pairs, get_kernel("add"))
    p.sink(counts, "counts")
    return p


def build_mapreduce() -> LogicalProgram:
    p = LogicalProgram(Mode.BATCH, name="mapreduce")
    m = p.map(p.input("A"), get_kernel("square"))
    r = p.reduce(m, get_kernel("add"))
    p.mark_output(r, "b")
    return p


def build_pairjoin() -> LogicalProgram:
    p = LogicalProgram(Mode.BATCH, name="pairjoin")
    j = p.join(p.input("L"), p.input("R"))
    out = p.map(j, get_kernel("swap_pair"))
    p.sink(out, "pairs")
    return p


def build_runsum() -> LogicalProgram:
    p = LogicalProgram(Mode.MICRO_BATCH_STREAM, name="runsum")
    s = p.source("nums")
    t = p.map_with_state(s, get_kernel("running_sum"), 0)
    p.sink(t, "sums")
    return p


def build_wincount() -> LogicalProgram:
    p = LogicalProgram(Mode.TUPLE_STREAM, name="wincount")
    s = p.source("ticks")
    w = p.window(s, WindowSpec(4, 2))
    c = p.map(w, get_kernel("count_window"))
    p.sink(c, "counts")
    return p


def build_halving() -> LogicalProgram:
    body = LogicalProgram(Mode.BATCH, name="halve_once")
    body.mark_output(body.map(body.input("x"), get_kernel("halve")), "x")
    p = LogicalProgram(Mode.BATCH, name="halving")
    it = p.iterate(p.input("A"), body, get_kernel("all_below_one"), 64)
    p.mark_output(it, "out")
    return p


def build_halving_stream() -> LogicalProgram:
    """Chunk-wise halving loop; under tagged iteration the chunks become
    independently looping tokens."""
    body = LogicalProgram(Mode.BATCH, name="halve_once")
    body.mark_output(body.map(body.input("x"), get_kernel("halve")), "x")
    p = LogicalProgram(Mode.MICRO_BATCH_STREAM, name="halving_stream")
    it = p.iterate(p.source("feed"), body, get_kernel("all_below_one"), 64)
    p.sink(it, "out")
    return p


def list_spout(records: list[Record]) -> Callable[[], Optional[Record]]:
    it = iter(records)

    def pull() -> Optional[Record]:
        return next(it, None)

    return pull


def build_merge2() -> Topology:
    """Two spouts race into one forwarding bolt: the classic case where
    arrival order is scheduling-dependent but the bag of records is not."""
    t = Topology("merge2")
    t.add_spout("left", list_spout([]))
    t.add_spout("right", list_spout([]))
    t.add_bolt("merge", NAMED_BOLTS["forward"])
    t.connect("left", "merge")
    t.connect("right", "merge")
    return t


# -- input generators ---------------------------------------------------------------


def gen_wordcount(rng: random.Random) -> dict:
    lines = [
        Record(None, " ".join(rng.choice(_WORDS) for _ in range(rng.randint(2, 6))))
        for _ in range(rng.randint(3, 20))
    ]
    return {"lines": lines}


def gen_mapreduce(rng: random.Random) -> dict:
    return {"A": [Record(None, rng.randint(-40, 40)) for _ in range(rng.randint(1, 30))]}


def gen_pairjoin(rng: random.Random) -> dict:
    def side(n):
        return [
            Record(list(rng.choice(_KEYS)), rng.randint(0, 99)) for _ in range(n)
        ]

    return {"L": side(rng.randint(1, 12)), "R": side(rng.randint(1, 12))}


def gen_runsum(rng: random.Random) -> dict:
    chunks = []
    for i in range(rng.randint(1, 4)):
        records = [
            Record(list(rng.choice(_KEYS)), rng.randint(-9, 9))
            for _ in range(rng.randint(1, 8))
        ]
        chunks.append(StreamChunk(i, Multiset(records)))
    return {"nums": chunks}


def gen_wincount(rng: random.Random) -> dict:
    return {"ticks": [Record(None, rng.randint(0, 9)) for _ in range(rng.randint(2, 30))]}


def gen_halving(rng: random.Random) -> dict:
    return {"A": [Record(None, rng.choice([1, 2, 4, 8, 16, 32, 64])) for _ in range(rng.randint(1, 5))]}


def gen_halving_stream(rng: random.Random) -> dict:
    chunks = []
    for i in range(rng.randint(1, 4)):
        records = [
            Record(None, rng.choice([1, 2, 4, 8, 16, 32]))
            for _ in range(rng.randint(1, 3))
        ]
        chunks.append(StreamChunk(i, Multiset(records)))
    return {"feed": chunks}


def gen_merge2(rng: random.Random) -> dict:
    def side():
        return [Record(None, rng.randint(0, 999)) for _ in range(rng.randint(4, 16))]

    return {"left": side(), "right": side()}


# -- the corpus ---------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    build: Callable[[], Union[LogicalProgram, Topology]]
    gen_input: Callable[[random.Random], dict]
    parallelism: int = 4
    supports_staged: bool = True  # staged execution is undefined per record


CORPUS: tuple[CorpusEntry, ...] = (
    CorpusEntry("wordcount", build_wordcount, gen_wordcount),
    CorpusEntry("mapreduce", build_mapreduce, gen_mapreduce),
    CorpusEntry("pairjoin", build_pairjoin, gen_pairjoin),
    CorpusEntry("runsum", build_runsum, gen_runsum),
    CorpusEntry("wincount", build_wincount, gen_wincount, parallelism=1, supports_staged=False),
    CorpusEntry("halving", build_halving, gen_halving),
)

# outside the six-program corpus: loop and race showcases used by the harness
EXTRAS: tuple[CorpusEntry, ...] = (
    CorpusEntry("halving_stream", build_halving_stream, gen_halving_stream, parallelism=1),
    CorpusEntry("merge2", build_merge2, gen_merge2, parallelism=1, supports_staged=False),
)


def corpus_entry(name: str) -> CorpusEntry:
    for e in CORPUS + EXTRAS:
        if e.name == name:
            return e
    raise KeyError(f"no corpus entry named {name!r}")
