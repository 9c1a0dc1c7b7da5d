"""JSON serialization for programs, topologies, and run settings.

Kernels and bolt callables are code, so they serialize by name: program
kernels must be registered builtins (see kernels.BUILTIN_KERNELS) and bolt
kernels must appear in programs.NAMED_BOLTS.  Spout generators are never
serialized; a loaded topology expects its spouts to be re-bound to record
lists before running.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from .data import WindowSpec
from .errors import InvalidArgument
from .kernels import BUILTIN_KERNELS, get_kernel
from .logical import InputRef, LogicalProgram, Mode, OpKind
from .programs import NAMED_BOLTS
from .plan import IterationStrategy
from .semantic import ConsumePolicy
from .topology import Routing, Topology
from .values import Record, record_from_json, record_to_json, value_from_json, value_to_json


def load_json_file(path: str) -> Any:
    """Parse a JSON file, reporting the position of any syntax error."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidArgument(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def dump_json_file(path: str, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# programs


def _kernel_name(kernel) -> str:
    if kernel.name not in BUILTIN_KERNELS:
        raise InvalidArgument(
            f"kernel {kernel.name!r} is not a registered builtin and cannot "
            "be serialized by name"
        )
    return kernel.name


def _ref_to_json(ref) -> Any:
    if isinstance(ref, InputRef):
        return {"input": ref.name}
    return ref


def program_to_json(prog: LogicalProgram) -> dict:
    """Dump a program to a plain dict.  Ops appear in declaration order."""
    ops = []
    sink_names = {op_id: name for name, op_id in prog.outputs.items()}
    for op in prog.ops.values():
        entry: dict[str, Any] = {"id": op.op_id, "kind": op.kind.value}
        if op.upstream:
            entry["upstream"] = [_ref_to_json(r) for r in op.upstream]
        if op.kernel is not None:
            entry["kernel"] = _kernel_name(op.kernel)
        if op.kind is OpKind.SOURCE:
            entry["input"] = op.params["input_name"]
        elif op.kind is OpKind.SINK:
            entry["output"] = sink_names[op.op_id]
        elif op.kind is OpKind.MAP_WITH_STATE:
            entry["init"] = value_to_json(op.params["init"])
        elif op.kind is OpKind.WINDOW:
            spec = op.params["spec"]
            entry["window"] = {"size": spec.size, "slide": spec.slide}
        elif op.kind is OpKind.ITERATE:
            entry["terminate"] = _kernel_name(op.params["terminate"])
            entry["max_iterations"] = op.params["max_iterations"]
            entry["body"] = program_to_json(op.params["body"])
        ops.append(entry)
    marked = {
        name: op_id
        for name, op_id in prog.outputs.items()
        if prog.ops[op_id].kind is not OpKind.SINK
    }
    out: dict[str, Any] = {"name": prog.name, "mode": prog.mode.value, "ops": ops}
    if marked:
        out["outputs"] = marked
    return out


def program_from_json(obj: dict) -> LogicalProgram:
    """Rebuild a program from program_to_json output.

    Ops are replayed through the builder in listed order, so upstream
    references must point at earlier entries (declaration order satisfies
    this for any dump we produced ourselves).
    """
    try:
        mode = Mode(obj.get("mode", "batch"))
    except ValueError:
        raise InvalidArgument(f"unknown mode {obj.get('mode')!r}") from None
    prog = LogicalProgram(mode, obj.get("name", "program"))
    idmap: dict[str, str] = {}
    input_refs: dict[str, InputRef] = {}

    def ref(r) -> Any:
        if isinstance(r, dict):
            name = r.get("input")
            if not isinstance(name, str):
                raise InvalidArgument(f"bad upstream reference {r!r}")
            if name not in input_refs:
                input_refs[name] = prog.input(name)
            return input_refs[name]
        if r not in idmap:
            raise InvalidArgument(f"upstream op {r!r} is not defined yet")
        return idmap[r]

    for entry in obj.get("ops", []):
        kind = entry.get("kind")
        ups = entry.get("upstream", [])
        if kind == "source":
            new = prog.source(entry.get("input"))
        elif kind in ("map", "flat_map", "filter", "reduce_by_key", "reduce"):
            if len(ups) != 1:
                raise InvalidArgument(f"{kind} takes exactly one upstream")
            k = get_kernel(entry["kernel"])
            new = getattr(prog, kind)(ref(ups[0]), k)
        elif kind == "group_by_key":
            new = prog.group_by_key(ref(ups[0]))
        elif kind == "join":
            if len(ups) != 2:
                raise InvalidArgument("join takes exactly two upstreams")
            new = prog.join(ref(ups[0]), ref(ups[1]))
        elif kind == "map_with_state":
            new = prog.map_with_state(
                ref(ups[0]),
                get_kernel(entry["kernel"]),
                value_from_json(entry["init"]),
            )
        elif kind == "window":
            w = entry["window"]
            new = prog.window(ref(ups[0]), WindowSpec(w["size"], w["slide"]))
        elif kind == "iterate":
            new = prog.iterate(
                ref(ups[0]),
                program_from_json(entry["body"]),
                get_kernel(entry["terminate"]),
                entry["max_iterations"],
            )
        elif kind == "sink":
            new = prog.sink(ref(ups[0]), entry.get("output"))
        else:
            raise InvalidArgument(f"unknown op kind {kind!r}")
        if "id" in entry:
            idmap[entry["id"]] = new
    for name, op_id in obj.get("outputs", {}).items():
        if op_id not in idmap:
            raise InvalidArgument(f"output {name!r} names unknown op {op_id!r}")
        prog.mark_output(idmap[op_id], name)
    return prog


# ---------------------------------------------------------------------------
# topologies


def _bolt_kernel_name(fn) -> str:
    for name, named in NAMED_BOLTS.items():
        if named is fn:
            return name
    raise InvalidArgument(
        "bolt kernel is not one of the named bolts and cannot be serialized"
    )


def topology_to_json(topo: Topology) -> dict:
    bolts = []
    for b in topo.bolts.values():
        entry: dict[str, Any] = {
            "name": b.name,
            "kernel": _bolt_kernel_name(b.kernel),
            "consume": b.consume_policy.value,
        }
        if b.replication != 1:
            entry["replication"] = b.replication
        if b.initial_state is not None:
            entry["initial_state"] = value_to_json(b.initial_state)
        if b.loop_exit:
            entry["loop_exit"] = True
        bolts.append(entry)
    return {
        "name": topo.name,
        "topology": True,
        "spouts": [{"name": s} for s in topo.spouts],
        "bolts": bolts,
        "edges": [
            {"src": e.src, "dst": e.dst, "routing": e.routing.value}
            for e in topo.edges
        ],
    }


def _unbound_spout(name: str):
    def generator() -> Optional[Record]:
        raise InvalidArgument(f"spout {name!r} has no records bound")

    return generator


def topology_from_json(obj: dict) -> Topology:
    """Rebuild a topology.  Spout generators raise until re-bound."""
    topo = Topology(obj.get("name", "topology"))
    for s in obj.get("spouts", []):
        topo.add_spout(s["name"], _unbound_spout(s["name"]))
    for b in obj.get("bolts", []):
        kname = b.get("kernel")
        if kname not in NAMED_BOLTS:
            raise InvalidArgument(f"unknown bolt kernel {kname!r}")
        try:
            consume = ConsumePolicy(b.get("consume", "from_any"))
        except ValueError:
            raise InvalidArgument(f"unknown consume policy {b.get('consume')!r}") from None
        init = b.get("initial_state")
        topo.add_bolt(
            b["name"],
            NAMED_BOLTS[kname],
            consume_policy=consume,
            initial_state=None if init is None else value_from_json(init),
            loop_exit=bool(b.get("loop_exit", False)),
            replication=int(b.get("replication", 1)),
        )
    for e in obj.get("edges", []):
        try:
            routing = Routing(e.get("routing", "round_robin"))
        except ValueError:
            raise InvalidArgument(f"unknown routing {e.get('routing')!r}") from None
        topo.connect(e["src"], e["dst"], routing=routing)
    return topo


def bind_spout(topo: Topology, name: str, records: list[Record]) -> None:
    """Point a spout at a fixed record list (consumed front to back)."""
    if name not in topo.spouts:
        raise InvalidArgument(f"no spout named {name!r}")
    queue = list(records)

    def generator() -> Optional[Record]:
        return queue.pop(0) if queue else None

    topo.spouts[name].generator = generator


def graph_from_json(obj: Any) -> LogicalProgram | Topology:
    """Dispatch on the 'topology' marker."""
    if not isinstance(obj, dict):
        raise InvalidArgument("expected a JSON object at top level")
    if obj.get("topology"):
        return topology_from_json(obj)
    return program_from_json(obj)


# ---------------------------------------------------------------------------
# records and inputs


def records_to_json(records: list[Record]) -> list:
    return [record_to_json(r) for r in records]


def records_from_json(obj: Any) -> list[Record]:
    if not isinstance(obj, list):
        raise InvalidArgument("expected a JSON array of records")
    try:
        return [record_from_json(r) for r in obj]
    except ValueError as e:
        raise InvalidArgument(str(e)) from None


def input_from_json(obj: Any) -> list[Record] | list[list[Record]]:
    """Accept either {"records": [...]} or {"chunks": [[...], ...]}."""
    if isinstance(obj, dict) and "chunks" in obj:
        chunks = obj["chunks"]
        if not isinstance(chunks, list):
            raise InvalidArgument("'chunks' must be an array of record arrays")
        return [records_from_json(c) for c in chunks]
    if isinstance(obj, dict) and "records" in obj:
        return records_from_json(obj["records"])
    return records_from_json(obj)


# ---------------------------------------------------------------------------
# run settings

_ITERATION = {s.value: s for s in IterationStrategy}


def iteration_from_name(name: str) -> IterationStrategy:
    if name not in _ITERATION:
        raise InvalidArgument(
            f"unknown iteration scheme {name!r}; choose from {sorted(_ITERATION)}"
        )
    return _ITERATION[name]
