"""Command-line front end.

Subcommands:
  plan      render a program's graph as DOT (semantic or parallel layer)
  run       execute a program and print its sink outputs
  sweep     run a program across an engine/worker matrix and compare runs
  validate  structural checks on a program or topology file

Programs are named corpus entries (see programs.CORPUS) or JSON files.
Exit codes: 0 success or informational result, 1 runtime failure or failed
check, 2 usage or parse failure.  FLOWDECK_SEED sets the default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Optional

from .data import Multiset, StreamChunk, discretize
from .errors import FlowdeckError, InvalidArgument
from .harness import (
    Cell,
    build_plan,
    default_matrix,
    verify_program,
)
from .io import read_csv_records, read_text_records
from .jsonio import (
    bind_spout,
    dump_json_file,
    graph_from_json,
    input_from_json,
    iteration_from_name,
    load_json_file,
)
from .logical import LogicalProgram, Mode
from .plan import PlanMode, expand, plan_to_dot
from .programs import CORPUS, EXTRAS, CorpusEntry, corpus_entry
from .runtime import Dispatch, RunConfig, run_process_based, run_scheduled, trace_to_jsonl
from .semantic import fuse, to_dot, translate
from .topology import Topology
from .values import value_to_json

_CORPUS_NAMES = [e.name for e in CORPUS + EXTRAS]


class UsageError(Exception):
    """Bad invocation or unparseable file; maps to exit code 2."""


# ---------------------------------------------------------------------------
# loading


def _load_graph(source: str):
    """Return (entry or None, built graph).  Builtin name or JSON path."""
    if source in _CORPUS_NAMES:
        entry = corpus_entry(source)
        return entry, entry.build()
    if not os.path.exists(source):
        raise UsageError(
            f"{source!r} is neither a built-in program "
            f"({', '.join(_CORPUS_NAMES)}) nor a file"
        )
    return None, graph_from_json(load_json_file(source))


def _semantic_graph(built, fused: bool):
    graph = built.as_semantic_graph() if isinstance(built, Topology) else translate(built)
    return fuse(graph) if fused else graph


def _read_input_file(path: str):
    """Records (or chunk lists) from a .txt, .csv, or .json file."""
    if not os.path.exists(path):
        raise UsageError(f"input file {path!r} does not exist")
    if path.endswith(".csv"):
        return read_csv_records(path)
    if path.endswith(".json"):
        return input_from_json(load_json_file(path))
    return read_text_records(path)


def _shape_for_mode(name: str, data, mode: Mode):
    """Fit file contents to the program mode.

    Flat record lists feed micro-batch programs one record per chunk (the
    natural reading of a text stream); chunked files feed tuple programs
    flattened.  Batch programs only accept flat lists.
    """
    chunked = bool(data) and isinstance(data[0], list)
    if mode is Mode.MICRO_BATCH_STREAM:
        if chunked:
            return [StreamChunk(i, Multiset(c)) for i, c in enumerate(data)]
        return discretize(data, 1)
    if chunked:
        if mode is Mode.BATCH:
            raise UsageError(f"input {name!r} is chunked but the program is batch")
        return [r for chunk in data for r in chunk]
    return data


def _bind_inputs(built, named: dict[str, str], positional: list[str]):
    """Resolve input files against the program's declared inputs.

    Returns the inputs dict for a program run; topologies get their spouts
    bound in place and return {}.
    """
    if isinstance(built, Topology):
        wanted = list(built.spouts)
    else:
        wanted = list(built.inputs)
    if named and positional:
        raise UsageError("use either positional input files or --input, not both")
    if positional:
        if len(positional) != len(wanted):
            raise UsageError(
                f"program takes {len(wanted)} input(s) {wanted}, "
                f"got {len(positional)} positional file(s)"
            )
        named = dict(zip(wanted, positional))
    unknown = [n for n in named if n not in wanted]
    if unknown:
        raise UsageError(f"unknown input(s): {', '.join(unknown)}; program takes {wanted}")
    missing = [n for n in wanted if n not in named]
    if missing:
        raise UsageError(f"missing input(s): {', '.join(missing)}; use --input name=file")

    if isinstance(built, Topology):
        for name, path in named.items():
            data = _read_input_file(path)
            if data and isinstance(data[0], list):
                data = [r for chunk in data for r in chunk]
            bind_spout(built, name, data)
        return {}
    return {
        name: _shape_for_mode(name, _read_input_file(path), built.mode)
        for name, path in named.items()
    }


def _env_seed() -> int:
    raw = os.environ.get("FLOWDECK_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"FLOWDECK_SEED must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# plan


def cmd_plan(args) -> int:
    _, built = _load_graph(args.program)
    graph = _semantic_graph(built, args.fuse)
    if args.layer == "semantic":
        dot = to_dot(graph)
    else:
        plan = expand(
            graph,
            parallelism=args.parallelism,
            mode=PlanMode(args.mode),
            iteration=iteration_from_name(args.iteration),
        )
        dot = plan_to_dot(plan)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dot)
    else:
        print(dot, end="")
    return 0


# ---------------------------------------------------------------------------
# run


def _merge_config(args) -> dict[str, Any]:
    """File config overridden by explicit flags."""
    settings: dict[str, Any] = {
        "engine": "scheduled",
        "mode": "pipelined",
        "iteration": "barrier",
        "parallelism": None,
        "workers": 2,
        "dispatch": "round_robin",
        "seed": None,
        "delay_ms": 0,
        "channel_capacity": 1024,
        "watchdog_ms": 10_000,
    }
    if args.config:
        loaded = load_json_file(args.config)
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: run config must be a JSON object")
        unknown = set(loaded) - set(settings)
        if unknown:
            raise UsageError(f"unknown run config key(s): {', '.join(sorted(unknown))}")
        settings.update(loaded)
    for key in settings:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    if settings["seed"] is None:
        settings["seed"] = _env_seed()
    return settings


def cmd_run(args) -> int:
    if args.trace and args.no_trace:
        raise UsageError("--trace and --no-trace conflict")
    settings = _merge_config(args)
    if settings["engine"] not in ("scheduled", "process"):
        raise UsageError(f"unknown engine {settings['engine']!r}")
    if settings["mode"] not in ("pipelined", "bsp"):
        raise UsageError(f"unknown mode {settings['mode']!r}")
    if settings["engine"] == "process" and settings["mode"] == "bsp":
        raise UsageError("the process engine runs pipelined plans only")

    entry, built = _load_graph(args.program)
    for kv in args.input or []:
        if "=" not in kv:
            raise UsageError(f"--input takes NAME=FILE, got {kv!r}")
    named = dict(kv.split("=", 1) for kv in args.input or [])
    inputs = _bind_inputs(built, named, args.files)

    parallelism = settings["parallelism"]
    if parallelism is None:
        parallelism = entry.parallelism if entry else 1
    plan = expand(
        _semantic_graph(built, args.fuse),
        parallelism=parallelism,
        mode=PlanMode(settings["mode"]),
        iteration=iteration_from_name(settings["iteration"]),
    )

    config = RunConfig(
        workers=settings["workers"],
        dispatch=Dispatch(settings["dispatch"]),
        channel_capacity=settings["channel_capacity"],
        watchdog_ms=settings["watchdog_ms"],
        seed=settings["seed"],
        delay_ms=settings["delay_ms"],
        trace=not args.no_trace,
    )
    runner = run_process_based if settings["engine"] == "process" else run_scheduled
    result = runner(plan, inputs, config)

    for sink in sorted(result.sinks):
        print(f"{sink}:")
        for line in sorted(result.sinks[sink]):
            print(f"  {line}")
    stats = dict(result.stats)
    supersteps = sum(1 for e in result.trace if e.kind == "superstep_begin")
    if supersteps:
        stats["supersteps"] = supersteps
    print(
        "ran {tasks} task(s) on {workers} worker(s) [{engine}/{mode}] "
        "in {wall_ms:.1f} ms".format(**stats)
        + (f", {stats['supersteps']} superstep(s)" if "supersteps" in stats else "")
    )

    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace_to_jsonl(result.trace))
    if args.output:
        dump_json_file(
            args.output,
            {
                "sinks": {k: [json.loads(s) for s in v] for k, v in result.sinks.items()},
                "states": {k: value_to_json(v) for k, v in result.states.items()},
                "stats": result.stats,
            },
        )
    return 0


# ---------------------------------------------------------------------------
# sweep


def _parse_cells(raw: Any) -> list[Cell]:
    if not isinstance(raw, list) or not raw:
        raise UsageError("'cells' must be a non-empty array")
    cells = []
    for i, c in enumerate(raw):
        if not isinstance(c, dict):
            raise UsageError(f"cell {i} must be an object")
        unknown = set(c) - {"engine", "mode", "workers", "dispatch", "seed", "delay_ms"}
        if unknown:
            raise UsageError(f"cell {i}: unknown key(s) {', '.join(sorted(unknown))}")
        cell = Cell(
            engine=c.get("engine", "scheduled"),
            mode=c.get("mode", "pipelined"),
            workers=int(c.get("workers", 2)),
            dispatch=c.get("dispatch", "round_robin"),
            seed=int(c.get("seed", 0)),
            delay_ms=int(c.get("delay_ms", 0)),
        )
        if cell.engine not in ("scheduled", "process"):
            raise UsageError(f"cell {i}: unknown engine {cell.engine!r}")
        if cell.mode not in ("pipelined", "bsp"):
            raise UsageError(f"cell {i}: unknown mode {cell.mode!r}")
        if cell.dispatch not in ("round_robin", "on_demand"):
            raise UsageError(f"cell {i}: unknown dispatch {cell.dispatch!r}")
        cells.append(cell)
    return cells


def _sweep_entry(spec: dict, matrix_path: str) -> tuple[CorpusEntry, int]:
    """Build the program-under-test and the input count from a matrix file."""
    program = spec.get("program")
    n_inputs = int(spec.get("inputs", 3))
    if isinstance(program, str):
        try:
            return corpus_entry(program), n_inputs
        except KeyError:
            raise UsageError(
                f"{matrix_path}: unknown program {program!r}; "
                f"choose from {', '.join(_CORPUS_NAMES)}"
            ) from None
    if not isinstance(program, dict):
        raise UsageError(f"{matrix_path}: 'program' must be a name or an object")

    # Inline program object: inputs come from bundled files, one fixed set.
    built0 = graph_from_json(program)
    input_files = spec.get("input_files", {})
    if not isinstance(input_files, dict):
        raise UsageError(f"{matrix_path}: 'input_files' must be an object")
    base = os.path.dirname(os.path.abspath(matrix_path))

    def resolve(path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(base, path)

    if isinstance(built0, Topology):
        raise UsageError(f"{matrix_path}: inline sweeps take programs, not topologies")
    fixed = {
        name: _shape_for_mode(name, _read_input_file(resolve(p)), built0.mode)
        for name, p in input_files.items()
    }
    missing = [n for n in built0.inputs if n not in fixed]
    if missing:
        raise UsageError(f"{matrix_path}: missing input_files for {', '.join(missing)}")

    staged = bool(spec.get("staged", built0.mode is not Mode.TUPLE_STREAM))
    entry = CorpusEntry(
        name=program.get("name", "program"),
        build=lambda: graph_from_json(program),
        gen_input=lambda rng: {k: list(v) for k, v in fixed.items()},
        parallelism=int(spec.get("parallelism", 2)),
        supports_staged=staged,
    )
    return entry, 1  # fixed inputs, one round


def cmd_sweep(args) -> int:
    spec = load_json_file(args.matrix)
    if not isinstance(spec, dict):
        raise UsageError(f"{args.matrix}: matrix must be a JSON object")
    unknown = set(spec) - {
        "program", "inputs", "seed", "cells", "input_files", "parallelism", "staged",
    }
    if unknown:
        raise UsageError(f"{args.matrix}: unknown key(s) {', '.join(sorted(unknown))}")
    entry, n_inputs = _sweep_entry(spec, args.matrix)
    cells = _parse_cells(spec["cells"]) if "cells" in spec else default_matrix()
    seed = int(spec.get("seed", _env_seed()))

    verdict = verify_program(entry, matrix=cells, n_inputs=n_inputs, seed=seed)

    print(f"program      {verdict.program}")
    print(f"cells        {verdict.cells}")
    print(f"runs         {verdict.runs}")
    print(f"compare      {verdict.compare}")
    print(f"equal        {'yes' if verdict.equal else 'NO'}")
    print(f"violations   {len(verdict.trace_violations)}")
    for d in verdict.discrepancies[:5]:
        print(f"  discrepancy: {json.dumps(d)}")
    for v in verdict.trace_violations[:5]:
        print(f"  violation:   {json.dumps(v)}")
    print(json.dumps(verdict.to_json()))
    if args.out:
        dump_json_file(args.out, verdict.to_json())
    return 0 if verdict.equal and not verdict.trace_violations else 1


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    _, built = _load_graph(args.file)
    if isinstance(built, Topology):
        diagnostics = built.validate()
        for d in diagnostics:
            print(d)
        if diagnostics:
            return 1
        print(f"ok: topology with {len(built.spouts)} spout(s), {len(built.bolts)} bolt(s)")
        return 0
    try:
        graph = translate(built)
        expand(graph, parallelism=2, mode=PlanMode.PIPELINED)
    except FlowdeckError as e:
        print(f"invalid: {e}")
        return 1
    print(f"ok: program with {len(built.ops)} op(s), mode {built.mode.value}")
    return 0


# ---------------------------------------------------------------------------
# wiring


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flowdeck",
        description="unified batch/stream dataflow engine",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    pl = sub.add_parser("plan", help="render a program graph as DOT")
    pl.add_argument("program", help="built-in name or program JSON path")
    pl.add_argument("--layer", choices=("semantic", "parallel"), default="semantic")
    pl.add_argument("-p", "--parallelism", type=int, default=1)
    pl.add_argument("--mode", choices=("pipelined", "bsp"), default="pipelined")
    pl.add_argument("--iteration", choices=("barrier", "tagged"), default="barrier")
    pl.add_argument("--fuse", action="store_true", help="fuse elementwise chains first")
    pl.add_argument("-o", "--out", help="write DOT here instead of stdout")
    pl.set_defaults(fn=cmd_plan)

    rn = sub.add_parser("run", help="execute a program")
    rn.add_argument("program", help="built-in name or program JSON path")
    rn.add_argument("files", nargs="*", help="input files, one per program input")
    rn.add_argument("--input", action="append", metavar="NAME=FILE",
                    help="bind one named input (repeatable)")
    rn.add_argument("--config", help="run configuration JSON file")
    rn.add_argument("--engine", choices=("scheduled", "process"))
    rn.add_argument("--mode", choices=("pipelined", "bsp"))
    rn.add_argument("--iteration", choices=("barrier", "tagged"))
    rn.add_argument("-p", "--parallelism", type=int)
    rn.add_argument("-w", "--workers", type=int)
    rn.add_argument("--dispatch", choices=("round_robin", "on_demand"))
    rn.add_argument("--seed", type=int)
    rn.add_argument("--delay-ms", dest="delay_ms", type=int)
    rn.add_argument("--channel-capacity", dest="channel_capacity", type=int)
    rn.add_argument("--watchdog-ms", dest="watchdog_ms", type=int)
    rn.add_argument("--fuse", action="store_true")
    rn.add_argument("--no-trace", action="store_true", help="skip trace collection")
    rn.add_argument("--trace", metavar="FILE", help="write the trace as JSONL")
    rn.add_argument("--output", metavar="FILE", help="write raw sink outputs as JSON")
    rn.set_defaults(fn=cmd_run)

    sw = sub.add_parser("sweep", help="compare runs across an engine matrix")
    sw.add_argument("matrix", help="matrix JSON file")
    sw.add_argument("-o", "--out", help="also write the verdict JSON here")
    sw.set_defaults(fn=cmd_sweep)

    va = sub.add_parser("validate", help="structural checks on a graph file")
    va.add_argument("file", help="program or topology JSON path")
    va.set_defaults(fn=cmd_validate)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        try:
            return args.fn(args)
        except (UsageError, InvalidArgument) as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        except KeyError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        except FlowdeckError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
