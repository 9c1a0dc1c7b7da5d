"""CLI subcommands end to end against the bundled data files."""

from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from flowdeck.cli import main
from flowdeck.runtime import KINDS, trace_from_jsonl

DATA = Path(__file__).resolve().parent.parent / "data"


def run_cli(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_plan_semantic_node_count(capsys):
    rc, out, _ = run_cli(capsys, "plan", "wordcount", "--layer", "semantic")
    assert rc == 0
    assert out.count("label=") == 5


def test_plan_parallel_bsp_has_stage_clusters(capsys):
    rc, out, _ = run_cli(capsys, "plan", "wordcount", "--layer", "parallel",
                         "-p", "4", "--mode", "bsp")
    assert rc == 0
    assert out.count('subgraph "cluster_stage') == 2


def test_plan_writes_file(capsys, tmp_path):
    dot = tmp_path / "g.dot"
    rc, out, _ = run_cli(capsys, "plan", "mapreduce", "-o", dot)
    assert rc == 0 and out == ""
    assert dot.read_text().startswith("digraph")


def test_plan_unknown_program(capsys):
    rc, _, err = run_cli(capsys, "plan", "nonesuch")
    assert rc == 2
    assert "nonesuch" in err


def test_run_wordcount_counts_words(capsys):
    rc, out, _ = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt")
    assert rc == 0
    assert '"k":"the","v":4' in out.replace(" ", "")
    assert "task(s)" in out


def test_run_empty_input_is_fine(capsys, tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    rc, out, _ = run_cli(capsys, "run", "wordcount", empty)
    assert rc == 0
    assert '"records":[]' in out.replace(" ", "")


def test_run_named_inputs_and_output_file(capsys, tmp_path):
    out_file = tmp_path / "res.json"
    rc, _, _ = run_cli(capsys, "run", "pairjoin",
                       "--input", f"L={DATA / 'left.csv'}",
                       "--input", f"R={DATA / 'right.csv'}",
                       "--output", out_file)
    assert rc == 0
    stored = json.loads(out_file.read_text())
    assert set(stored) == {"sinks", "states", "stats"}
    (coll,) = stored["sinks"]["pairs"]
    keys = sorted(r["k"] for r in coll["records"])
    assert keys == ["a", "a", "c"]


def test_run_trace_file_parses(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    rc, _, _ = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt",
                       "--trace", trace)
    assert rc == 0
    events = trace_from_jsonl(trace.read_text())
    assert events and all(e.kind in KINDS for e in events)
    assert [e.seq for e in events] == list(range(len(events)))


def test_run_config_file_sets_bsp(capsys):
    rc, out, _ = run_cli(capsys, "run", "runsum", DATA / "ticks.json",
                         "--config", DATA / "run-bsp.json")
    assert rc == 0
    assert "[scheduled/bsp]" in out


def test_run_flag_overrides_config(capsys):
    rc, out, _ = run_cli(capsys, "run", "runsum", DATA / "ticks.json",
                         "--config", DATA / "run-bsp.json", "--mode", "pipelined")
    assert rc == 0
    assert "[scheduled/pipelined]" in out


def test_run_topology_through_process_engine(capsys):
    rc, out, _ = run_cli(capsys, "run", "merge2",
                         "--input", f"left={DATA / 'left.csv'}",
                         "--input", f"right={DATA / 'right.csv'}",
                         "--engine", "process", "-w", "2")
    assert rc == 0
    assert out.count('"kind":"tuple"') == 7


def test_run_iterate_program_from_json(capsys):
    rc, out, _ = run_cli(capsys, "run", DATA / "halving.json",
                         "--input", f"A={DATA / 'left.csv'}")
    assert rc == 0
    assert '"v":0.5' in out.replace(" ", "")


def test_run_usage_errors(capsys, tmp_path):
    rc, _, err = run_cli(capsys, "run", "pairjoin", DATA / "left.csv")
    assert rc == 2 and "2 input(s)" in err

    rc, _, err = run_cli(capsys, "run", "wordcount")
    assert rc == 2 and "missing input" in err

    rc, _, err = run_cli(capsys, "run", "wordcount",
                         "--input", f"words={DATA / 'lorem.txt'}")
    assert rc == 2 and "unknown input" in err

    rc, _, err = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt",
                         "--engine", "process", "--mode", "bsp")
    assert rc == 2 and "pipelined" in err

    rc, _, err = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt",
                         "--input", f"lines={DATA / 'lorem.txt'}")
    assert rc == 2 and "not both" in err


def test_run_stall_maps_to_exit_1(capsys):
    rc, _, err = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt",
                         "--delay-ms", "400", "--watchdog-ms", "60")
    assert rc == 1
    assert "watchdog" in err


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["run", "wordcount", "--turbo"])
    assert exc.value.code == 2


def test_sweep_wordcount_matrix(capsys):
    rc, out, _ = run_cli(capsys, "sweep", DATA / "wordcount-matrix.json")
    assert rc == 0
    verdict = json.loads(out.strip().splitlines()[-1])
    assert verdict["equal"] is True
    assert verdict["compare"] == "sequence"
    assert verdict["cells"] == 5


def test_sweep_from_any_is_informational(capsys):
    rc, out, _ = run_cli(capsys, "sweep", DATA / "merge2-matrix.json")
    assert rc == 0
    verdict = json.loads(out.strip().splitlines()[-1])
    assert verdict["compare"] == "bag"
    assert verdict["equal"] is True


def test_sweep_inline_program(capsys, tmp_path):
    import flowdeck.jsonio as jio
    from flowdeck.programs import build_mapreduce

    matrix = {
        "program": jio.program_to_json(build_mapreduce()),
        "input_files": {"A": str(DATA / "left.csv")},
        "parallelism": 2,
        "cells": [
            {"engine": "scheduled", "workers": 2},
            {"engine": "process", "workers": 2},
        ],
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(matrix))
    rc, out, _ = run_cli(capsys, "sweep", path)
    assert rc == 0
    verdict = json.loads(out.strip().splitlines()[-1])
    assert verdict["equal"] is True and verdict["runs"] == 2


def test_sweep_malformed_matrix(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"cells": [')
    rc, _, err = run_cli(capsys, "sweep", bad)
    assert rc == 2 and "bad.json:1:" in err

    nocells = tmp_path / "m.json"
    nocells.write_text(json.dumps({"program": "wordcount", "cells": []}))
    rc, _, err = run_cli(capsys, "sweep", nocells)
    assert rc == 2

    unknown = tmp_path / "u.json"
    unknown.write_text(json.dumps({"program": "wordcount", "extra": 1}))
    rc, _, err = run_cli(capsys, "sweep", unknown)
    assert rc == 2 and "unknown key" in err


def test_validate_program_and_topology(capsys):
    rc, out, _ = run_cli(capsys, "validate", DATA / "halving.json")
    assert rc == 0 and out.startswith("ok:")
    rc, out, _ = run_cli(capsys, "validate", DATA / "merge2.json")
    assert rc == 0 and "2 spout(s)" in out


def test_validate_flags_unbroken_cycle(capsys, tmp_path):
    topo = {
        "topology": True,
        "spouts": [{"name": "s"}],
        "bolts": [{"name": "a", "kernel": "forward"},
                  {"name": "b", "kernel": "forward"}],
        "edges": [{"src": "s", "dst": "a"},
                  {"src": "a", "dst": "b"},
                  {"src": "b", "dst": "a"}],
    }
    path = tmp_path / "cycle.json"
    path.write_text(json.dumps(topo))
    rc, out, _ = run_cli(capsys, "validate", path)
    assert rc == 1
    assert out.strip()


def test_seed_env_var(capsys, monkeypatch):
    monkeypatch.setenv("FLOWDECK_SEED", "17")
    rc, _, _ = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt")
    assert rc == 0

    monkeypatch.setenv("FLOWDECK_SEED", "lots")
    rc, _, err = run_cli(capsys, "run", "wordcount", DATA / "lorem.txt")
    assert rc == 2 and "FLOWDECK_SEED" in err
