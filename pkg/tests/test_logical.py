from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdeck.data import Multiset, StreamChunk, WindowSpec, bag_equal, discretize
from flowdeck.errors import (
    EmptyInput,
    InvalidArgument,
    InvalidMode,
    KeyedInputRequired,
    UnsupportedInStream,
)
from flowdeck.kernels import BUILTIN_KERNELS, Kernel, get_kernel
from flowdeck.logical import LogicalProgram, Mode, OpKind, lift_to_stream
from flowdeck.reference import (
    evaluate,
    evaluate_batch,
    evaluate_microbatch,
    evaluate_tuple,
)
from flowdeck.values import Record, canon_bytes

ADD = get_kernel("add")
HALVE = get_kernel("halve")
IDENT = get_kernel("identity")
SPLIT = get_kernel("split_words")
PAIR1 = get_kernel("pair_with_one")


def keyed(*pairs):
    return [Record(k, v) for k, v in pairs]


def unkeyed(*payloads):
    return [Record(None, p) for p in payloads]


def chain_program(*stages, mode=Mode.BATCH):
    """source -> stages... -> sink, returns (program, input name, output name)."""
    prog = LogicalProgram(mode)
    src = prog.source("in")
    cur = src
    for add_stage in stages:
        cur = add_stage(prog, cur)
    prog.sink(cur, "out")
    return prog


# --- construction rules ------------------------------------------------------


def test_ops_require_matching_kernels():
    prog = LogicalProgram()
    src = prog.source("in")
    with pytest.raises(InvalidArgument):
        prog.map(src, ADD)  # fold kernel on a map
    with pytest.raises(InvalidArgument):
        prog.group_by_key("nonexistent")
    with pytest.raises(InvalidArgument):
        prog._add(OpKind.GROUP_BY_KEY, (src,), IDENT)


def test_join_requires_batch_mode_and_two_upstreams():
    prog = LogicalProgram(Mode.TUPLE_STREAM)
    a = prog.source("a")
    b = prog.source("b")
    with pytest.raises(InvalidMode):
        prog.join(a, b)


def test_map_with_state_rejected_in_batch_mode():
    prog = LogicalProgram(Mode.BATCH)
    src = prog.source("in")
    with pytest.raises(InvalidMode):
        prog.map_with_state(src, get_kernel("running_count"), 0)


def test_window_only_on_tuple_streams():
    for mode in (Mode.BATCH, Mode.MICRO_BATCH_STREAM):
        prog = LogicalProgram(mode)
        src = prog.source("in")
        with pytest.raises(InvalidMode):
            prog.window(src, WindowSpec(2, 1))


def test_iterate_rejects_zero_max_iterations():
    body = LogicalProgram()
    ref = body.input("x")
    m = body.map(ref, HALVE)
    body.mark_output(m, "y")
    prog = LogicalProgram()
    src = prog.source("in")
    with pytest.raises(InvalidArgument):
        prog.iterate(src, body, get_kernel("all_below_one"), 0)


def test_aggregations_rejected_on_tuple_streams():
    prog = LogicalProgram(Mode.TUPLE_STREAM)
    src = prog.source("in")
    with pytest.raises(InvalidMode):
        prog.reduce_by_key(src, ADD)


# --- batch semantics vs comprehension oracles ---------------------------------


def test_group_by_key_example():
    prog = chain_program(lambda p, up: p.group_by_key(up))
    out = evaluate_batch(prog, {"in": keyed(("k1", "a"), ("k1", "b"), ("k2", "c"))})[
        "out"
    ]
    assert bag_equal(out, [Record("k1", ["a", "b"]), Record("k2", ["c"])])


def test_group_by_key_rejects_unkeyed():
    prog = chain_program(lambda p, up: p.group_by_key(up))
    with pytest.raises(KeyedInputRequired):
        evaluate_batch(prog, {"in": unkeyed(1, 2)})


def test_join_example_and_empty_side():
    prog = LogicalProgram()
    a = prog.source("a")
    b = prog.source("b")
    j = prog.join(a, b)
    prog.sink(j, "out")
    out = evaluate_batch(prog, {"a": keyed(("k", 1), ("k", 2)), "b": keyed(("k", 10))})[
        "out"
    ]
    assert bag_equal(out, [Record("k", (1, 10)), Record("k", (2, 10))])
    assert evaluate_batch(prog, {"a": keyed(("k", 1)), "b": []})["out"] == []


def test_reduce_by_key_wordcount_pairs():
    prog = chain_program(lambda p, up: p.reduce_by_key(up, ADD))
    out = evaluate_batch(prog, {"in": keyed(("a", 1), ("b", 1), ("a", 1))})["out"]
    assert bag_equal(out, [Record("a", 2), Record("b", 1)])


def test_reduce_empty_input_is_an_error():
    prog = chain_program(lambda p, up: p.reduce(up, ADD))
    with pytest.raises(EmptyInput):
        evaluate_batch(prog, {"in": []})


def test_wordcount_example():
    prog = chain_program(
        lambda p, up: p.flat_map(up, SPLIT),
        lambda p, up: p.map(up, PAIR1),
        lambda p, up: p.reduce_by_key(up, ADD),
    )
    out = evaluate_batch(prog, {"in": unkeyed("to be or not to be")})["out"]
    assert bag_equal(
        out, keyed(("to", 2), ("be", 2), ("or", 1), ("not", 1))
    )


small_values = st.one_of(st.integers(-9, 9), st.text("ab", max_size=2))
keyed_records = st.lists(
    st.tuples(st.sampled_from(["k1", "k2", "k3", "k4"]), small_values), max_size=24
).map(lambda pairs: keyed(*pairs))


@given(keyed_records)
@settings(max_examples=60, deadline=None)
def test_group_by_key_matches_comprehension(records):
    prog = chain_program(lambda p, up: p.group_by_key(up))
    got = evaluate_batch(prog, {"in": records})["out"]
    keys = {canon_bytes(r.key): r.key for r in records}
    expected = [
        Record(k, sorted([r.payload for r in records if canon_bytes(r.key) == ck],
                         key=canon_bytes))
        for ck, k in keys.items()
    ]
    assert bag_equal(got, expected)


@given(keyed_records, keyed_records)
@settings(max_examples=60, deadline=None)
def test_join_matches_comprehension(left, right):
    prog = LogicalProgram()
    a = prog.source("a")
    b = prog.source("b")
    prog.sink(prog.join(a, b), "out")
    got = evaluate_batch(prog, {"a": left, "b": right})["out"]
    expected = [
        Record(l.key, (l.payload, r.payload))
        for l in left
        for r in right
        if canon_bytes(l.key) == canon_bytes(r.key)
    ]
    assert bag_equal(got, expected)


@given(st.lists(st.integers(-50, 50), max_size=30))
@settings(max_examples=60, deadline=None)
def test_map_matches_comprehension(payloads):
    prog = chain_program(lambda p, up: p.map(up, get_kernel("square")))
    got = evaluate_batch(prog, {"in": unkeyed(*payloads)})["out"]
    assert bag_equal(got, unkeyed(*[v * v for v in payloads]))


@given(
    st.lists(st.tuples(st.sampled_from("abc"), st.integers(-9, 9)), max_size=24),
    st.sampled_from(["add", "mul", "max"]),
)
@settings(max_examples=60, deadline=None)
def test_reduce_by_key_equals_group_then_fold(pairs, kernel_name):
    f = get_kernel(kernel_name)
    records = keyed(*pairs)
    direct = chain_program(lambda p, up: p.reduce_by_key(up, f))
    grouped = chain_program(lambda p, up: p.group_by_key(up))
    got = evaluate_batch(direct, {"in": records})["out"]
    groups = evaluate_batch(grouped, {"in": records})["out"]
    folded = []
    for g in groups:
        acc = g.payload[0]
        for v in g.payload[1:]:
            acc = f(acc, v)
        folded.append(Record(g.key, acc))
    assert bag_equal(got, folded)


@given(st.lists(st.integers(-20, 20), max_size=30))
@settings(max_examples=60, deadline=None)
def test_map_map_fuses_to_composed_map(payloads):
    records = unkeyed(*payloads)
    two_maps = chain_program(
        lambda p, up: p.map(up, get_kernel("increment")),
        lambda p, up: p.map(up, get_kernel("square")),
    )
    composed = Kernel("inc_then_sq", "map", lambda r: Record(r.key, (r.payload + 1) ** 2))
    one_map = chain_program(lambda p, up: p.map(up, composed))
    a = evaluate_batch(two_maps, {"in": records})["out"]
    b = evaluate_batch(one_map, {"in": records})["out"]
    assert bag_equal(a, b)


# --- iteration -----------------------------------------------------------------


def halving_body():
    body = LogicalProgram()
    ref = body.input("x")
    m = body.map(ref, HALVE)
    body.mark_output(m, "y")
    return body


def test_iterate_halving_example():
    prog = LogicalProgram()
    src = prog.source("in")
    it = prog.iterate(src, halving_body(), get_kernel("all_below_one"), 32)
    prog.sink(it, "out")
    out = evaluate_batch(prog, {"in": unkeyed(8)})["out"]
    assert out == [Record(None, 0.5)]


def test_iterate_terminate_true_initially():
    prog = LogicalProgram()
    src = prog.source("in")
    it = prog.iterate(src, halving_body(), get_kernel("always"), 5)
    prog.sink(it, "out")
    out = evaluate_batch(prog, {"in": unkeyed(8, 3)})["out"]
    assert bag_equal(out, unkeyed(8, 3))


def test_iterate_hits_max_iterations():
    body = LogicalProgram()
    ref = body.input("x")
    m = body.map(ref, get_kernel("increment"))
    body.mark_output(m, "y")
    prog = LogicalProgram()
    src = prog.source("in")
    it = prog.iterate(src, body, get_kernel("never"), 3)
    prog.sink(it, "out")
    out = evaluate_batch(prog, {"in": unkeyed(0)})["out"]
    assert out == [Record(None, 3)]


# --- streams -------------------------------------------------------------------


def test_map_with_state_left_fold_example():
    prog = LogicalProgram(Mode.TUPLE_STREAM)
    src = prog.source("in")
    ms = prog.map_with_state(src, get_kernel("running_sum"), 0)
    prog.sink(ms, "out")
    out = evaluate_tuple(prog, {"in": keyed(("k", 1), ("k", 2), ("j", 5))})["out"]
    assert out == keyed(("k", 1), ("k", 3), ("j", 5))


def test_window_then_count_on_tuple_stream():
    prog = LogicalProgram(Mode.TUPLE_STREAM)
    src = prog.source("in")
    w = prog.window(src, WindowSpec(3, 1))
    c = prog.map(w, get_kernel("count_window"))
    prog.sink(c, "out")
    out = evaluate_tuple(prog, {"in": unkeyed("a", "b", "a", "a")})["out"]
    assert out == [
        Record(None, [("a", 2), ("b", 1)]),
        Record(None, [("a", 2), ("b", 1)]),
    ]


def test_lift_to_stream_applies_ops_chunkwise():
    batch = chain_program(
        lambda p, up: p.flat_map(up, SPLIT),
        lambda p, up: p.map(up, PAIR1),
        lambda p, up: p.reduce_by_key(up, ADD),
    )
    lifted = lift_to_stream(batch)
    assert lifted.mode is Mode.MICRO_BATCH_STREAM
    lines = unkeyed("a b a", "b b", "a")
    chunks = discretize(lines, 1)
    got = evaluate_microbatch(lifted, {"in": chunks})["out"]
    for i, chunk in enumerate(got):
        expected = evaluate_batch(batch, {"in": [lines[i]]})["out"]
        assert chunk.seq == i
        assert bag_equal(chunk.batch, expected)


@given(st.lists(st.integers(0, 9), min_size=0, max_size=30), st.integers(1, 5))
@settings(max_examples=50, deadline=None)
def test_lifted_elementwise_program_concatenates_to_batch_output(payloads, bs):
    batch = chain_program(
        lambda p, up: p.map(up, get_kernel("increment")),
        lambda p, up: p.filter(up, get_kernel("keep_odd")),
    )
    lifted = lift_to_stream(batch)
    records = unkeyed(*payloads)
    chunks = discretize(records, bs)
    got = evaluate_microbatch(lifted, {"in": chunks})["out"]
    flat = [r for c in got for r in c.batch]
    assert bag_equal(flat, evaluate_batch(batch, {"in": records})["out"])


def test_lift_rejects_join_and_iterate():
    with_join = LogicalProgram()
    a = with_join.source("a")
    b = with_join.source("b")
    with_join.sink(with_join.join(a, b), "out")
    with pytest.raises(UnsupportedInStream):
        lift_to_stream(with_join)

    with_iter = LogicalProgram()
    src = with_iter.source("in")
    it = with_iter.iterate(src, halving_body(), get_kernel("all_below_one"), 4)
    with_iter.sink(it, "out")
    with pytest.raises(UnsupportedInStream):
        lift_to_stream(with_iter)


def test_lift_rejects_stream_programs():
    prog = LogicalProgram(Mode.TUPLE_STREAM)
    prog.source("in")
    with pytest.raises(InvalidMode):
        lift_to_stream(prog)


def test_evaluate_dispatches_on_mode():
    prog = chain_program(lambda p, up: p.map(up, IDENT))
    assert evaluate(prog, {"in": unkeyed(1)})["out"] == unkeyed(1)
