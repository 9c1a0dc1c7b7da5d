"""Spout/bolt wiring, structural validation, and the sequential simulator."""

from __future__ import annotations

import pytest

from flowdeck.errors import GraphError, InvalidArgument, StallError
from flowdeck.reference import evaluate_topology
from flowdeck.semantic import ConsumePolicy, Granularity
from flowdeck.topology import BoltState, Routing, Topology
from flowdeck.values import Record


def list_spout(records):
    it = iter(records)
    return lambda: next(it, None)


def forward(inputs, emit, state):
    for _, r in inputs:
        emit(r)


def wordcount_topology(lines):
    topo = Topology("wordcount")
    topo.add_spout("lines", list_spout(lines))

    def split(inputs, emit, state):
        for _, r in inputs:
            for w in r.payload.split():
                emit(Record(w, 1))

    def count(inputs, emit, state):
        for _, r in inputs:
            n = state.get(r.key, 0) + r.payload
            state.set(r.key, n)
            emit(Record(r.key, n))

    topo.add_bolt("split", split)
    topo.add_bolt("count", count, initial_state=[])
    topo.connect("lines", "split")
    topo.connect("split", "count", Routing.HASH_BY_KEY)
    return topo


# -- construction errors ---------------------------------------------------------


def test_duplicate_names_rejected():
    topo = Topology()
    topo.add_spout("a", list_spout([]))
    with pytest.raises(InvalidArgument, match="duplicate"):
        topo.add_bolt("a", forward)


def test_replication_must_be_positive():
    topo = Topology()
    with pytest.raises(InvalidArgument, match="replication"):
        topo.add_bolt("b", forward, replication=0)


def test_connect_rejects_unknown_and_spout_destinations():
    topo = Topology()
    topo.add_spout("s", list_spout([]))
    topo.add_bolt("b", forward)
    with pytest.raises(InvalidArgument, match="unknown"):
        topo.connect("nope", "b")
    with pytest.raises(InvalidArgument, match="unknown"):
        topo.connect("s", "nope")
    with pytest.raises(InvalidArgument, match="spout"):
        topo.connect("b", "s")


# -- validation ------------------------------------------------------------------


def test_validate_clean_topology_reports_nothing():
    topo = wordcount_topology([])
    assert topo.validate() == []


def test_validate_flags_inputless_bolts():
    topo = Topology()
    topo.add_bolt("orphan", forward)
    issues = topo.validate()
    assert len(issues) == 1
    assert "orphan" in issues[0]


def test_validate_flags_cycles_without_an_exit():
    topo = Topology()
    topo.add_spout("s", list_spout([]))
    topo.add_bolt("a", forward)
    topo.add_bolt("b", forward)
    topo.connect("s", "a")
    topo.connect("a", "b")
    topo.connect("b", "a")
    issues = topo.validate()
    assert len(issues) == 1
    assert "loop-exit" in issues[0]

    # declaring an exit bolt clears the diagnostic
    topo.bolts["b"].loop_exit = True
    assert topo.validate() == []


def test_validate_flags_self_loops():
    topo = Topology()
    topo.add_spout("s", list_spout([]))
    topo.add_bolt("a", forward)
    topo.connect("s", "a")
    topo.connect("a", "a")
    assert len(topo.validate()) == 1


# -- conversion to the actor graph ------------------------------------------------


def test_as_semantic_graph_is_one_to_one():
    topo = wordcount_topology([])
    g = topo.as_semantic_graph()
    # no implicit actors appear at this layer
    assert set(g.actors) == {"lines", "split", "count"}
    assert len(g.edges) == len(topo.edges)
    assert g.input_bindings == {"lines": ("lines", 0)}
    assert g.output_bindings == {"count": "count"}
    assert g.actors["lines"].spec.kind == "spout"
    assert g.actors["split"].spec.kind == "bolt"
    assert g.actors["count"].stateful
    assert not g.actors["split"].stateful
    for a in g.actors.values():
        assert a.granularity is Granularity.TUPLE
    assert [e.routing for e in g.edges] == ["round_robin", "hash"]


def test_as_semantic_graph_ports_follow_connect_order():
    topo = Topology()
    topo.add_spout("s1", list_spout([]))
    topo.add_spout("s2", list_spout([]))
    topo.add_bolt("merge", forward)
    topo.connect("s1", "merge")
    topo.connect("s2", "merge")
    g = topo.as_semantic_graph()
    assert [(e.src, e.dst_port) for e in g.edges] == [("s1", 0), ("s2", 1)]
    assert g.actors["merge"].consume_policy is ConsumePolicy.FROM_ANY


def test_as_semantic_graph_marks_feedback_edges():
    topo = Topology()
    topo.add_spout("s", list_spout([]))
    topo.add_bolt("work", forward)
    topo.add_bolt("gate", forward, loop_exit=True)
    topo.add_bolt("out", forward)
    topo.connect("s", "work")
    topo.connect("work", "gate")
    topo.connect("gate", "work")
    topo.connect("gate", "out")
    g = topo.as_semantic_graph()
    loops = [e for e in g.edges if e.loop]
    assert [(e.src, e.dst) for e in loops] == [("gate", "work")]
    # loop edges are excluded from dependency ordering, so this is acyclic
    assert g.topo_order()


def test_as_semantic_graph_refuses_invalid_topologies():
    topo = Topology()
    topo.add_bolt("orphan", forward)
    with pytest.raises(GraphError, match="orphan"):
        topo.as_semantic_graph()


# -- bolt state ------------------------------------------------------------------


def test_bolt_state_get_set_dump():
    st = BoltState([])
    assert st.get("x") is None
    assert st.get("x", 0) == 0
    st.set("x", 1)
    st.set("y", 2)
    st.set("x", 3)
    assert st.get("x") == 3
    assert st.dump() == [("x", 3), ("y", 2)]


def test_bolt_state_dump_order_is_canonical():
    a = BoltState([])
    b = BoltState([])
    for k, v in [("b", 1), ("a", 2), (3, 4)]:
        a.set(k, v)
    for k, v in [(3, 4), ("a", 2), ("b", 1)]:
        b.set(k, v)
    assert a.dump() == b.dump()


def test_bolt_state_roundtrips_through_its_dump():
    st = BoltState([])
    st.set((1, "k"), [1, 2])
    st.set("plain", 0)
    again = BoltState(st.dump())
    assert again.dump() == st.dump()


def test_bolt_state_rejects_non_pair_lists():
    with pytest.raises(InvalidArgument):
        BoltState("nope")
    with pytest.raises(InvalidArgument):
        BoltState([1, 2])


# -- sequential simulation ---------------------------------------------------------


def test_simulated_wordcount_emits_running_counts():
    lines = [Record(None, "to be or not to be"), Record(None, "be")]
    out = evaluate_topology(wordcount_topology(lines))
    emitted = [(r.key, r.payload) for r in out["count"]]
    assert emitted == [
        ("to", 1),
        ("be", 1),
        ("or", 1),
        ("not", 1),
        ("to", 2),
        ("be", 2),
        ("be", 3),
    ]


def test_simulated_bindings_override_spout_generators():
    topo = wordcount_topology([Record(None, "ignored")])
    out = evaluate_topology(topo, bindings={"lines": [Record(None, "a a")]})
    assert [(r.key, r.payload) for r in out["count"]] == [("a", 1), ("a", 2)]


def test_simulated_from_all_pairs_inputs_by_port():
    topo = Topology()
    topo.add_spout("left", list_spout([Record(None, 1), Record(None, 2)]))
    topo.add_spout("right", list_spout([Record(None, 10), Record(None, 20)]))

    def add_pairwise(inputs, emit, state):
        (_, a), (_, b) = inputs
        emit(Record(None, a.payload + b.payload))

    topo.add_bolt("zip", add_pairwise, consume_policy=ConsumePolicy.FROM_ALL)
    topo.connect("left", "zip")
    topo.connect("right", "zip")
    out = evaluate_topology(topo)
    assert [r.payload for r in out["zip"]] == [11, 22]


def test_simulated_from_any_merges_everything():
    topo = Topology()
    topo.add_spout("a", list_spout([Record(None, 1), Record(None, 2)]))
    topo.add_spout("b", list_spout([Record(None, 3)]))
    topo.add_bolt("merge", forward)
    topo.connect("a", "merge")
    topo.connect("b", "merge")
    out = evaluate_topology(topo)
    assert sorted(r.payload for r in out["merge"]) == [1, 2, 3]


def test_simulated_loop_runs_until_the_gate_opens():
    topo = Topology("halving")
    topo.add_spout("numbers", list_spout([Record(None, 8), Record(None, 3)]))

    def halve(inputs, emit, state):
        for _, r in inputs:
            emit(Record(r.key, r.payload / 2))

    def gate(inputs, emit, state):
        for _, r in inputs:
            emit(r, to="done" if r.payload < 1 else "halve")

    topo.add_bolt("halve", halve)
    topo.add_bolt("gate", gate, loop_exit=True)
    topo.add_bolt("done", forward)
    topo.connect("numbers", "halve")
    topo.connect("halve", "gate")
    topo.connect("gate", "halve")
    topo.connect("gate", "done")
    out = evaluate_topology(topo)
    assert sorted(r.payload for r in out["done"]) == [0.5, 0.75]


def test_simulated_targeted_emit_rejects_unknown_successors():
    topo = Topology()
    topo.add_spout("s", list_spout([Record(None, 1)]))

    def bad(inputs, emit, state):
        emit(Record(None, 0), to="missing")

    topo.add_bolt("a", bad)
    topo.add_bolt("b", forward)
    topo.connect("s", "a")
    topo.connect("a", "b")
    with pytest.raises(InvalidArgument, match="missing"):
        evaluate_topology(topo)


def test_simulated_runaway_loop_hits_the_firing_budget():
    topo = Topology()
    topo.add_spout("s", list_spout([Record(None, 1)]))

    def echo(inputs, emit, state):
        for _, r in inputs:
            emit(r)

    topo.add_bolt("spin", echo, loop_exit=True)
    topo.connect("s", "spin")
    topo.connect("spin", "spin")
    with pytest.raises(StallError):
        evaluate_topology(topo, max_firings=500)


def test_simulated_invalid_topology_is_refused():
    topo = Topology()
    topo.add_bolt("orphan", forward)
    with pytest.raises(GraphError):
        evaluate_topology(topo)
