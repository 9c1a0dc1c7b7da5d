"""Whole-plan execution on both engines against the sequential reference."""

from __future__ import annotations

import time

import pytest

from flowdeck.data import Multiset, StreamChunk
from flowdeck.errors import InvalidArgument, InvalidMode, RunAborted, StallError
from flowdeck.harness import build_plan, reference_lines
from flowdeck.kernels import Kernel, get_kernel
from flowdeck.logical import LogicalProgram, Mode
from flowdeck.plan import IterationStrategy, PlanMode, expand
from flowdeck.programs import (
    build_merge2,
    build_runsum,
    build_wincount,
    build_wordcount,
    corpus_entry,
    list_spout,
)
from flowdeck.runtime import (
    Dispatch,
    RunConfig,
    run_process_based,
    run_scheduled,
)
from flowdeck.semantic import ConsumePolicy, translate
from flowdeck.topology import Topology
from flowdeck.values import Record


def plan_for(built, parallelism=2, mode="pipelined", iteration="barrier"):
    graph = built.as_semantic_graph() if isinstance(built, Topology) else translate(built)
    return expand(
        graph,
        parallelism=parallelism,
        mode=PlanMode(mode),
        iteration=IterationStrategy(iteration),
    )


def run_both(built, inputs, parallelism=2, workers=2, **cfg):
    plan = plan_for(built, parallelism)
    config = RunConfig(workers=workers, **cfg)
    return {
        "scheduled": run_scheduled(plan, inputs, config),
        "process": run_process_based(plan, inputs, config),
    }


def lines_of(result):
    return {k: sorted(v) for k, v in result.sinks.items()}


def ref_of(built, inputs):
    return {k: sorted(v) for k, v in reference_lines(built, inputs).items()}


# -- agreement with the reference ----------------------------------------------------


def test_wordcount_matches_reference_on_both_engines():
    built = build_wordcount()
    inputs = {"lines": [Record(None, "a b a"), Record(None, "b b c")]}
    want = ref_of(built, inputs)
    for name, result in run_both(built, inputs, parallelism=4, workers=4).items():
        assert lines_of(result) == want, name


def test_runsum_matches_reference_and_keeps_chunk_order():
    built = build_runsum()
    chunks = [
        StreamChunk(0, Multiset([Record("a", 1), Record("b", 2)])),
        StreamChunk(1, Multiset([Record("a", 3)])),
        StreamChunk(2, Multiset([Record("b", -1), Record("a", 1)])),
    ]
    inputs = {"nums": chunks}
    want = reference_lines(built, inputs)
    for name, result in run_both(built, inputs, parallelism=1).items():
        assert result.sinks == want, name  # exact order, not just bag


def test_wincount_sequences_match_at_parallelism_one():
    built = build_wincount()
    inputs = {"ticks": [Record(None, i) for i in range(9)]}
    want = reference_lines(built, inputs)
    for name, result in run_both(built, inputs, parallelism=1).items():
        assert result.sinks == want, name


def test_merge2_is_bag_equal_across_engines():
    built = build_merge2()
    inputs = {
        "left": [Record(None, i) for i in range(5)],
        "right": [Record(None, i * 100) for i in range(4)],
    }
    want = ref_of(built, inputs)
    for name, result in run_both(built, inputs, parallelism=1, workers=3).items():
        assert lines_of(result) == want, name


def test_empty_stream_runs_clean():
    built = build_runsum()
    inputs = {"nums": []}
    for name, result in run_both(built, inputs, parallelism=1).items():
        assert result.sinks == {"sums": []}, name


# -- scheduling modes ----------------------------------------------------------------


def test_bsp_wordcount_runs_one_round():
    built = build_wordcount()
    inputs = {"lines": [Record(None, "x y"), Record(None, "y")]}
    plan = plan_for(built, 4, mode="bsp")
    result = run_scheduled(plan, inputs, RunConfig(workers=4))
    assert result.stats["rounds"] == 1
    assert lines_of(result) == ref_of(built, inputs)
    barriers = [e for e in result.trace if e.kind == "barrier_enter"]
    assert len(barriers) == plan.stages


def test_bsp_microbatch_runs_chunk_per_round():
    built = build_runsum()
    chunks = [StreamChunk(i, Multiset([Record("k", 1)])) for i in range(3)]
    plan = plan_for(built, 2, mode="bsp")
    result = run_scheduled(plan, {"nums": chunks}, RunConfig(workers=2))
    assert result.stats["rounds"] == 3


def test_dispatch_policies_agree():
    built = build_wordcount()
    inputs = {"lines": [Record(None, "p q p r")] * 3}
    plan = plan_for(built, 4)
    rr = run_scheduled(plan, inputs, RunConfig(workers=4, dispatch=Dispatch.ROUND_ROBIN))
    od = run_scheduled(plan, inputs, RunConfig(workers=4, dispatch=Dispatch.ON_DEMAND))
    assert rr.sinks == od.sinks


def test_process_engine_rejects_staged_plans():
    plan = plan_for(build_wordcount(), 2, mode="bsp")
    with pytest.raises(InvalidMode, match="scheduling engine"):
        run_process_based(plan, {"lines": []}, RunConfig(workers=2))


# -- iteration -----------------------------------------------------------------------


def test_halving_iterates_to_fixpoint_on_both_engines():
    built = corpus_entry("halving").build()
    inputs = {"A": [Record(None, 8)]}
    want = ref_of(built, inputs)
    for name, result in run_both(built, inputs, parallelism=2).items():
        assert lines_of(result) == want, name
        supersteps = {e.superstep for e in result.trace if e.kind == "superstep_begin"}
        assert supersteps == {0, 1, 2, 3}, name


def test_tagged_iteration_matches_barrier_results():
    built = corpus_entry("halving_stream").build()
    chunks = [
        StreamChunk(0, Multiset([Record(None, 8)])),
        StreamChunk(1, Multiset([Record(None, 2)])),
    ]
    inputs = {"feed": chunks}
    want = ref_of(built, inputs)
    for iteration in ("barrier", "tagged"):
        plan = plan_for(built, 1, iteration=iteration)
        result = run_scheduled(plan, inputs, RunConfig(workers=4))
        assert lines_of(result) == want, iteration


# -- state snapshot and restore ------------------------------------------------------


def test_checkpoint_and_resume_equals_straight_run():
    built = build_runsum()
    chunks = [
        StreamChunk(0, Multiset([Record("a", 1)])),
        StreamChunk(1, Multiset([Record("a", 2), Record("b", 7)])),
        StreamChunk(2, Multiset([Record("b", 1)])),
    ]
    plan = plan_for(built, 1)
    full = run_scheduled(plan, {"nums": chunks}, RunConfig(workers=2))

    head = run_scheduled(plan, {"nums": chunks[:1]}, RunConfig(workers=2))
    resumed_chunks = [StreamChunk(0, chunks[1].batch), StreamChunk(1, chunks[2].batch)]
    tail = run_scheduled(
        plan,
        {"nums": resumed_chunks},
        RunConfig(workers=2, initial_states=head.states),
    )
    import json

    def chunk_records(result):
        return [json.loads(line)["records"] for line in result.sinks["sums"]]

    assert chunk_records(tail) == chunk_records(full)[1:]
    assert tail.states == full.states


def test_initial_state_rejects_unknown_or_stateless_actors():
    built = build_runsum()
    plan = plan_for(built, 1)
    with pytest.raises(InvalidArgument):
        run_scheduled(
            plan, {"nums": []}, RunConfig(initial_states={"no_such_actor": []})
        )
    stateless = next(
        a.actor_id for a in plan.actors.values() if a.spec.kind == "sink"
    )
    with pytest.raises(InvalidArgument):
        run_scheduled(
            plan, {"nums": []}, RunConfig(initial_states={stateless: []})
        )


# -- failure paths -------------------------------------------------------------------


def boom(v):
    raise ValueError("boom")


def failing_prog():
    p = LogicalProgram(Mode.BATCH, name="failing")
    s = p.source("xs")
    m = p.map(s, Kernel("boom", "map", boom))
    p.sink(m, "out")
    return p


def test_kernel_exception_becomes_run_aborted():
    plan = plan_for(failing_prog(), 1)
    inputs = {"xs": [Record(None, 1)]}
    with pytest.raises(RunAborted) as exc:
        run_scheduled(plan, inputs, RunConfig(workers=2))
    assert isinstance(exc.value.cause, ValueError)
    assert exc.value.actor

    with pytest.raises(RunAborted):
        run_process_based(plan, inputs, RunConfig(workers=2))


def sleepy(v):
    time.sleep(0.3)
    return v


def test_watchdog_catches_hung_kernels():
    p = LogicalProgram(Mode.BATCH, name="slow")
    s = p.source("xs")
    m = p.map(s, Kernel("sleepy", "map", sleepy))
    p.sink(m, "out")
    plan = plan_for(p, 1)
    with pytest.raises(StallError):
        run_scheduled(
            plan,
            {"xs": [Record(None, 1)]},
            RunConfig(workers=1, watchdog_ms=50),
        )


def runaway_topology():
    t = Topology("runaway")
    t.add_spout("seed", list_spout([]))

    def grow(inputs, emit, state):
        for _, r in inputs:
            emit(r)
            emit(r)

    t.add_bolt("grow", grow, loop_exit=True)
    t.connect("seed", "grow")
    t.connect("grow", "grow")
    return t


def test_capacity_gating_stalls_runaway_feedback():
    inputs = {"seed": [Record(None, 1)]}
    for runner in (run_scheduled, run_process_based):
        plan = plan_for(runaway_topology(), 1)
        with pytest.raises(StallError):
            runner(plan, inputs, RunConfig(workers=2, channel_capacity=4, watchdog_ms=2000))


# -- tuple zip topologies ------------------------------------------------------------


def zip_topology():
    t = Topology("zipper")
    t.add_spout("l", list_spout([]))
    t.add_spout("r", list_spout([]))

    def pair(inputs, emit, state):
        emit(Record(None, [r.payload for _, r in inputs]))

    t.add_bolt("zip", pair, consume_policy=ConsumePolicy.FROM_ALL)
    t.connect("l", "zip")
    t.connect("r", "zip")
    return t


def test_from_all_zips_ports():
    inputs = {
        "l": [Record(None, i) for i in range(3)],
        "r": [Record(None, i * 10) for i in range(3)],
    }
    plan = plan_for(zip_topology(), 1)
    result = run_scheduled(plan, inputs, RunConfig(workers=2))
    sink = next(iter(result.sinks))
    assert len(result.sinks[sink]) == 3


def test_from_all_unequal_streams_drop_leftovers():
    inputs = {
        "l": [Record(None, i) for i in range(5)],
        "r": [Record(None, i * 10) for i in range(2)],
    }
    for runner in (run_scheduled, run_process_based):
        plan = plan_for(zip_topology(), 1)
        result = runner(plan, inputs, RunConfig(workers=2))
        sink = next(iter(result.sinks))
        assert len(result.sinks[sink]) == 2, runner.__name__


# -- run artifacts -------------------------------------------------------------------


def test_trace_can_be_disabled():
    built = build_wordcount()
    plan = plan_for(built, 1)
    result = run_scheduled(
        plan, {"lines": [Record(None, "a")]}, RunConfig(trace=False)
    )
    assert result.trace == []
    assert result.sinks["counts"]


def test_stats_shape():
    built = build_wordcount()
    inputs = {"lines": [Record(None, "a b")]}
    both = run_both(built, inputs, parallelism=2, workers=2)
    s = both["scheduled"].stats
    assert s["engine"] == "scheduled" and s["tasks"] > 0 and s["wall_ms"] >= 0
    p = both["process"].stats
    assert p["engine"] == "process" and p["tasks"] > 0
