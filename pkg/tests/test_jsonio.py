"""JSON round-trips for programs, topologies, records, and run inputs."""

from __future__ import annotations

import json
import random

import pytest

from flowdeck.data import StreamChunk
from flowdeck.errors import InvalidArgument
from flowdeck.jsonio import (
    bind_spout,
    dump_json_file,
    graph_from_json,
    input_from_json,
    iteration_from_name,
    load_json_file,
    program_from_json,
    program_to_json,
    records_from_json,
    records_to_json,
    topology_from_json,
    topology_to_json,
)
from flowdeck.logical import Mode
from flowdeck.plan import IterationStrategy
from flowdeck.programs import CORPUS, EXTRAS, build_merge2, build_wordcount
from flowdeck.reference import evaluate, evaluate_topology
from flowdeck.topology import Topology
from flowdeck.values import Record


def test_program_roundtrip_preserves_semantics():
    rng = random.Random(3)
    for entry in CORPUS + EXTRAS:
        built = entry.build()
        if isinstance(built, Topology):
            continue
        back = program_from_json(json.loads(json.dumps(program_to_json(built))))
        assert back.mode is built.mode
        assert list(back.inputs) == list(built.inputs)
        assert list(back.outputs) == list(built.outputs)
        inp = entry.gen_input(rng)
        assert evaluate(back, inp) == evaluate(built, inp)


def test_iterate_body_survives_roundtrip():
    obj = program_to_json(next(e for e in CORPUS if e.name == "halving").build())
    it = next(op for op in obj["ops"] if op["kind"] == "iterate")
    assert it["terminate"] == "all_below_one"
    assert it["max_iterations"] == 64
    assert it["body"]["ops"], "nested body must carry its own op list"


def test_topology_roundtrip_preserves_semantics():
    topo = build_merge2()
    back = topology_from_json(json.loads(json.dumps(topology_to_json(topo))))
    assert set(back.spouts) == {"left", "right"}
    assert back.bolts["merge"].consume_policy is topo.bolts["merge"].consume_policy

    recs = {"left": [Record(None, i) for i in range(3)],
            "right": [Record(None, i * 10) for i in range(2)]}
    rebuilt = build_merge2()
    for name, rs in recs.items():
        bind_spout(back, name, rs)
        bind_spout(rebuilt, name, rs)
    assert evaluate_topology(back) == evaluate_topology(rebuilt)


def test_unbound_spout_raises_until_bound():
    back = topology_from_json(topology_to_json(build_merge2()))
    with pytest.raises(InvalidArgument):
        back.spouts["left"].generator()
    bind_spout(back, "left", [Record(None, 1)])
    assert back.spouts["left"].generator() == Record(None, 1)
    assert back.spouts["left"].generator() is None


def test_bind_spout_unknown_name():
    with pytest.raises(InvalidArgument):
        bind_spout(build_merge2(), "middle", [])


def test_graph_from_json_dispatches_on_marker():
    assert isinstance(graph_from_json(topology_to_json(build_merge2())), Topology)
    prog = graph_from_json(program_to_json(build_wordcount()))
    assert prog.mode is Mode.BATCH


def test_program_from_json_rejects_unknowns():
    with pytest.raises(InvalidArgument):
        program_from_json({"mode": "hybrid", "ops": []})
    with pytest.raises(InvalidArgument):
        program_from_json({"ops": [{"kind": "teleport"}]})
    with pytest.raises(InvalidArgument):
        program_from_json(
            {"ops": [{"id": "a", "kind": "map", "kernel": "square",
                      "upstream": ["missing"]}]}
        )


def test_forward_reference_rejected():
    # sink names an op that appears later in the list
    with pytest.raises(InvalidArgument):
        program_from_json({
            "ops": [
                {"id": "s", "kind": "sink", "upstream": ["m"], "output": "o"},
                {"id": "m", "kind": "source", "input": "A"},
            ],
        })


def test_records_roundtrip_and_input_forms():
    recs = [Record("a", 1), Record(None, [1, "x"]), Record((2, 3), (0.5, ["y"]))]
    assert records_from_json(records_to_json(recs)) == recs
    assert input_from_json({"records": records_to_json(recs)}) == recs

    chunked = input_from_json({"chunks": [records_to_json(recs), []]})
    assert chunked == [recs, []]


def test_malformed_record_is_invalid_argument():
    with pytest.raises(InvalidArgument):
        records_from_json([{"value": 1}])
    with pytest.raises(InvalidArgument):
        input_from_json({"chunks": "nope"})
    with pytest.raises(InvalidArgument):
        input_from_json(42)


def test_load_json_file_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"a": [1,\n  }\n')
    with pytest.raises(InvalidArgument, match=r"broken\.json:2:3"):
        load_json_file(str(p))


def test_dump_then_load(tmp_path):
    p = tmp_path / "prog.json"
    dump_json_file(str(p), program_to_json(build_wordcount()))
    assert load_json_file(str(p))["name"] == "wordcount"


def test_iteration_from_name():
    assert iteration_from_name("barrier") is IterationStrategy.BARRIER
    assert iteration_from_name("tagged") is IterationStrategy.TAGGED
    with pytest.raises(InvalidArgument):
        iteration_from_name("speculative")


def test_stream_chunks_shape():
    # chunked JSON input parses into plain record lists; shaping to
    # StreamChunk happens at the CLI boundary
    got = input_from_json({"chunks": [[{"k": "a", "v": 1}]]})
    assert got == [[Record("a", 1)]]
    assert not isinstance(got[0], StreamChunk)
