"""Differential verification harness.

Sweeps corpus programs across engines, schedules, worker counts, and
seeds, comparing every run against the single-threaded evaluator and
checking trace invariants.  Comparison level is derived from the plan:
byte-identical sink sequences where the plan admits no racing merge,
bag equality where it does.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union

from .data import (
    CollectionToken,
    MicroBatchToken,
    Multiset,
    TupleToken,
    token_to_json,
)
from .kernels import BUILTIN_KERNELS, Kernel
from .logical import LogicalProgram, Mode
from .plan import ExecutionPlan, IterationStrategy, PlanMode, expand
from .programs import CORPUS, CorpusEntry
from .reference import evaluate, evaluate_topology
from .runtime import Dispatch, RunConfig, RunResult, run_process_based, run_scheduled
from .semantic import ConsumePolicy, translate
from .topology import Topology
from .trace_checks import check_trace
from .values import canon_json


@dataclass(frozen=True)
class Cell:
    """One point in the sweep matrix."""

    engine: str = "scheduled"  # "scheduled" | "process"
    mode: str = "pipelined"  # "pipelined" | "bsp" (process runs pipelined only)
    workers: int = 2
    dispatch: str = "round_robin"
    seed: int = 0
    delay_ms: int = 0

    def describe(self) -> str:
        bits = [self.engine, self.mode, f"w{self.workers}"]
        if self.engine == "scheduled":
            bits.append(self.dispatch)
        if self.seed:
            bits.append(f"seed{self.seed}")
        if self.delay_ms:
            bits.append(f"delay{self.delay_ms}")
        return "/".join(bits)


def default_matrix(
    workers: tuple[int, ...] = (1, 2, 4, 8), seeds: tuple[int, ...] = (0, 1)
) -> list[Cell]:
    """16 scheduled cells (mode x workers x dispatch) plus one process
    column per (workers x seed): 24 cells with the defaults."""
    cells = [
        Cell("scheduled", mode, w, disp)
        for mode in ("bsp", "pipelined")
        for w in workers
        for disp in ("round_robin", "on_demand")
    ]
    cells += [Cell("process", "pipelined", w, "round_robin", s) for w in workers for s in seeds]
    return cells


def cells_for(entry: CorpusEntry, matrix: list[Cell]) -> list[Cell]:
    if entry.supports_staged:
        return matrix
    return [c for c in matrix if c.mode != "bsp"]


# -- running one cell ---------------------------------------------------------------


def build_plan(
    entry: CorpusEntry,
    mode: str = "pipelined",
    iteration: str = "barrier",
    parallelism: Optional[int] = None,
) -> ExecutionPlan:
    built = entry.build()
    if isinstance(built, Topology):
        graph = built.as_semantic_graph()
    else:
        graph = translate(built)
    return expand(
        graph,
        parallelism=parallelism or entry.parallelism,
        mode=PlanMode.BSP if mode == "bsp" else PlanMode.PIPELINED,
        iteration=IterationStrategy(iteration),
    )


def run_cell(
    plan: ExecutionPlan, inputs: dict, cell: Cell, trace: bool = True
) -> RunResult:
    config = RunConfig(
        workers=cell.workers,
        dispatch=Dispatch(cell.dispatch),
        seed=cell.seed,
        delay_ms=cell.delay_ms,
        trace=trace,
    )
    if cell.engine == "process":
        return run_process_based(plan, inputs, config)
    return run_scheduled(plan, inputs, config)


# -- the oracle side ----------------------------------------------------------------


def reference_lines(
    built: Union[LogicalProgram, Topology], inputs: dict
) -> dict[str, list[str]]:
    """Sink contents the engines must reproduce, as canonical token lines."""
    if isinstance(built, Topology):
        collected = evaluate_topology(built, bindings=inputs)
        return {
            name: [canon_json(token_to_json(TupleToken(r))) for r in records]
            for name, records in collected.items()
        }
    outputs = evaluate(built, inputs)
    lines: dict[str, list[str]] = {}
    for name, got in outputs.items():
        if built.mode is Mode.MICRO_BATCH_STREAM:
            lines[name] = [canon_json(token_to_json(MicroBatchToken(c))) for c in got]
        elif built.mode is Mode.TUPLE_STREAM:
            lines[name] = [canon_json(token_to_json(TupleToken(r))) for r in got]
        else:
            lines[name] = [canon_json(token_to_json(CollectionToken(Multiset(got))))]
    return lines


def plan_keeps_order(plan: ExecutionPlan) -> bool:
    """A plan with no merge that races channels against each other
    reproduces the oracle's sink sequences byte for byte; one with such a
    merge only promises the same bag."""
    for actor in plan.actors.values():
        if actor.consume_policy is ConsumePolicy.FROM_ANY:
            if len(plan.in_channels(actor.actor_id)) > 1:
                return False
    return True


def compare_lines(
    want: dict[str, list[str]], got: dict[str, list[str]], ordered: bool
) -> list[str]:
    problems = []
    for name in want:
        w, g = want[name], got.get(name)
        if g is None:
            problems.append(f"sink {name!r} missing from run result")
            continue
        same = (w == g) if ordered else (sorted(w) == sorted(g))
        if not same:
            problems.append(
                f"sink {name!r} differs ({'sequence' if ordered else 'bag'} "
                f"compare): want {len(w)} lines, got {len(g)}"
            )
    for name in got:
        if name not in want:
            problems.append(f"run produced unexpected sink {name!r}")
    return problems


# -- verdicts -----------------------------------------------------------------------


@dataclass
class Verdict:
    program: str
    cells: int
    runs: int
    compare: str
    equal: bool
    discrepancies: list[dict] = field(default_factory=list)
    trace_violations: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "program": self.program,
            "cells": self.cells,
            "runs": self.runs,
            "compare": self.compare,
            "equal": self.equal,
            "discrepancies": self.discrepancies,
            "trace_violations": self.trace_violations,
        }


def verify_program(
    entry: CorpusEntry,
    matrix: Optional[list[Cell]] = None,
    n_inputs: int = 5,
    seed: int = 0,
    check_traces: bool = True,
) -> Verdict:
    """Run one corpus program over random inputs across the matrix and
    compare every run against the oracle."""
    matrix = cells_for(entry, matrix or default_matrix())
    rng = random.Random(seed)
    plans = {
        mode: build_plan(entry, mode=mode)
        for mode in {c.mode for c in matrix}
    }
    ordered = {mode: plan_keeps_order(plan) for mode, plan in plans.items()}
    verdict = Verdict(
        program=entry.name,
        cells=len(matrix),
        runs=0,
        compare="sequence" if all(ordered.values()) else "bag",
        equal=True,
    )
    for i in range(n_inputs):
        inputs = entry.gen_input(rng)
        want = reference_lines(entry.build(), inputs)
        for cell in matrix:
            result = run_cell(plans[cell.mode], inputs, cell)
            verdict.runs += 1
            problems = compare_lines(want, result.sinks, ordered[cell.mode])
            for p in problems:
                verdict.equal = False
                verdict.discrepancies.append(
                    {"input": i, "cell": cell.describe(), "problem": p}
                )
            if check_traces:
                for v in check_trace(result.trace, staged=cell.mode == "bsp"):
                    verdict.equal = False
                    verdict.trace_violations.append(
                        {"input": i, "cell": cell.describe(), "problem": v}
                    )
    return verdict


def verify_corpus(
    matrix: Optional[list[Cell]] = None,
    n_inputs: int = 5,
    seed: int = 0,
) -> list[Verdict]:
    return [
        verify_program(e, matrix=matrix, n_inputs=n_inputs, seed=seed) for e in CORPUS
    ]


# -- schedule-race witnesses --------------------------------------------------------


def ordering_spread(
    entry: CorpusEntry,
    inputs: dict,
    seeds: range,
    workers: int = 2,
    delay_ms: int = 2,
) -> dict:
    """Run one program across seeds with injected delays and report how
    many distinct sink orderings appear, and whether each stays bag-equal
    to the oracle."""
    plan = build_plan(entry, mode="pipelined")
    want = reference_lines(entry.build(), inputs)
    orderings: set[tuple] = set()
    bags_ok = True
    for seed in seeds:
        cell = Cell("scheduled", "pipelined", workers, "on_demand", seed, delay_ms)
        result = run_cell(plan, inputs, cell)
        key = tuple(tuple(result.sinks[name]) for name in sorted(result.sinks))
        orderings.add(key)
        if compare_lines(want, result.sinks, ordered=False):
            bags_ok = False
    return {"distinct_orderings": len(orderings), "bag_equal": bags_ok}


# -- kernel algebra -----------------------------------------------------------------


def kernel_contract_check(
    kernel: Kernel, trials: int = 200, seed: int = 7
) -> Optional[dict]:
    """Probe a fold kernel for associativity and commutativity on random
    integer triples; returns a witness for the first broken law."""
    rng = random.Random(seed)
    for _ in range(trials):
        a, b, c = (rng.randint(-50, 50) for _ in range(3))
        if kernel(a, kernel(b, c)) != kernel(kernel(a, b), c):
            return {"kernel": kernel.name, "law": "associativity", "triple": [a, b, c]}
        if kernel(a, b) != kernel(b, a):
            return {"kernel": kernel.name, "law": "commutativity", "pair": [a, b]}
    return None


def check_claimed_contracts() -> list[dict]:
    """Cross-check every built-in fold kernel's claimed algebra; a fold
    used by a parallel reduction must hold up or the plan may reassociate
    its way to a different answer."""
    findings = []
    for kernel in BUILTIN_KERNELS.values():
        if kernel.kind != "fold":
            continue
        witness = kernel_contract_check(kernel)
        if (witness is None) != kernel.associative_commutative:
            findings.append(
                witness
                or {"kernel": kernel.name, "law": "claimed non-AC but no witness found"}
            )
    return findings
