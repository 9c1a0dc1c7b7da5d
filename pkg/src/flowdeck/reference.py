"""Sequential reference evaluation.

Single-threaded, direct implementations of operator semantics, used as the
oracle the concurrent runtimes are checked against.  Nothing here touches
plans, channels, or threads.
"""

from __future__ import annotations

from typing import Optional, Union

from .data import Multiset, StreamChunk, windows
from .errors import (
    EmptyInput,
    GraphError,
    InvalidArgument,
    InvalidMode,
    KeyedInputRequired,
)
from .kernels import sorted_values
from .logical import InputRef, LogicalProgram, Mode, OpKind
from .semantic import ConsumePolicy
from .values import Record, Value, canon_bytes


def window_member_value(r: Record) -> Value:
    """How a window materializes one member record inside its payload list."""
    return (r.key, r.payload) if r.key is not None else r.payload


def _group(records: list[Record]) -> dict[bytes, tuple[Value, list[Value]]]:
    groups: dict[bytes, tuple[Value, list[Value]]] = {}
    for r in records:
        if r.key is None:
            raise KeyedInputRequired("key-based operator saw an unkeyed record")
        entry = groups.get(canon_bytes(r.key))
        if entry is None:
            groups[canon_bytes(r.key)] = (r.key, [r.payload])
        else:
            entry[1].append(r.payload)
    return groups


def eval_group_by_key(records: list[Record]) -> list[Record]:
    # the per-key group is a bag, materialized as a canonically sorted list
    return [Record(k, sorted_values(vs)) for k, vs in _group(records).values()]


def eval_reduce_by_key(records: list[Record], f) -> list[Record]:
    out = []
    for k, vs in _group(records).values():
        acc = vs[0]
        for v in vs[1:]:
            acc = f(acc, v)
        out.append(Record(k, acc))
    return out


def eval_reduce(records: list[Record], f) -> list[Record]:
    if not records:
        raise EmptyInput("reduce over an empty collection")
    acc = records[0].payload
    for r in records[1:]:
        acc = f(acc, r.payload)
    return [Record(None, acc)]


def eval_join(left: list[Record], right: list[Record]) -> list[Record]:
    by_key: dict[bytes, list[Value]] = {}
    for r in right:
        if r.key is None:
            raise KeyedInputRequired("join saw an unkeyed record")
        by_key.setdefault(canon_bytes(r.key), []).append(r.payload)
    out = []
    for l in left:
        if l.key is None:
            raise KeyedInputRequired("join saw an unkeyed record")
        for vb in by_key.get(canon_bytes(l.key), ()):
            out.append(Record(l.key, (l.payload, vb)))
    return out


class _StateCells:
    """Per-key state for one map_with_state operator."""

    def __init__(self, init: Value):
        self.init = init
        self.cells: dict[bytes, Value] = {}

    def step(self, f, r: Record) -> Record:
        ck = canon_bytes(r.key) if r.key is not None else b"\x00"
        state = self.cells.get(ck, self.init)
        new_state, out = f(state, r)
        self.cells[ck] = new_state
        return out


def _eval_batch_ops(
    prog: LogicalProgram,
    inputs: dict[str, list[Record]],
    states: Optional[dict[str, _StateCells]] = None,
) -> dict[str, list[Record]]:
    """One pass over the op DAG; `states` persists across chunks when given."""
    values: dict[str, list[Record]] = {}

    def resolve(ref: Union[str, InputRef]) -> list[Record]:
        if isinstance(ref, InputRef):
            return inputs[ref.name]
        return values[ref]

    for op in prog.ops.values():
        kind = op.kind
        if kind is OpKind.SOURCE:
            values[op.op_id] = list(inputs[op.params["input_name"]])
            continue
        ups = [resolve(ref) for ref in op.upstream]
        if kind is OpKind.MAP:
            values[op.op_id] = [op.kernel(r) for r in ups[0]]
        elif kind is OpKind.FLAT_MAP:
            values[op.op_id] = [o for r in ups[0] for o in op.kernel(r)]
        elif kind is OpKind.FILTER:
            values[op.op_id] = [r for r in ups[0] if op.kernel(r)]
        elif kind is OpKind.GROUP_BY_KEY:
            values[op.op_id] = eval_group_by_key(ups[0])
        elif kind is OpKind.REDUCE_BY_KEY:
            values[op.op_id] = eval_reduce_by_key(ups[0], op.kernel)
        elif kind is OpKind.REDUCE:
            values[op.op_id] = eval_reduce(ups[0], op.kernel)
        elif kind is OpKind.JOIN:
            values[op.op_id] = eval_join(ups[0], ups[1])
        elif kind is OpKind.MAP_WITH_STATE:
            assert states is not None, "stateful op outside a stream evaluation"
            cells = states.setdefault(op.op_id, _StateCells(op.params["init"]))
            values[op.op_id] = [cells.step(op.kernel, r) for r in ups[0]]
        elif kind is OpKind.ITERATE:
            values[op.op_id] = eval_iterate(op, ups[0])
        elif kind is OpKind.SINK:
            values[op.op_id] = ups[0]
        else:
            raise InvalidMode(f"{kind.value} is not defined in this mode")
    return values


def eval_iterate(op, records: list[Record]) -> list[Record]:
    body: LogicalProgram = op.params["body"]
    terminate = op.params["terminate"]
    limit = op.params["max_iterations"]
    (in_name,) = body.inputs.keys()
    (out_op,) = body.outputs.values()
    current = records
    done = 0
    while not terminate(Multiset(current)) and done < limit:
        current = _eval_batch_ops(body, {in_name: current})[out_op]
        done += 1
    return current


def evaluate_batch(
    prog: LogicalProgram, inputs: dict[str, list[Record]]
) -> dict[str, list[Record]]:
    if prog.mode is not Mode.BATCH:
        raise InvalidMode("evaluate_batch needs a batch program")
    values = _eval_batch_ops(prog, inputs)
    return {name: values[op_id] for name, op_id in prog.outputs.items()}


def evaluate_microbatch(
    prog: LogicalProgram, inputs: dict[str, list[StreamChunk]]
) -> dict[str, list[StreamChunk]]:
    """Chunk-wise evaluation: chunk i of the output is the batch semantics
    applied to chunk i of the input; stateful operators carry state across
    chunks in seq order."""
    if prog.mode is not Mode.MICRO_BATCH_STREAM:
        raise InvalidMode("evaluate_microbatch needs a micro-batch program")
    n_chunks = {len(chunks) for chunks in inputs.values()}
    if len(n_chunks) > 1:
        raise InvalidMode("all stream inputs must have the same chunk count")
    count = n_chunks.pop() if n_chunks else 0
    states: dict[str, _StateCells] = {}
    out: dict[str, list[StreamChunk]] = {name: [] for name in prog.outputs}
    for i in range(count):
        chunk_inputs = {
            name: list(chunks[i].batch.records) for name, chunks in inputs.items()
        }
        values = _eval_batch_ops(prog, chunk_inputs, states)
        for name, op_id in prog.outputs.items():
            out[name].append(StreamChunk(i, Multiset(values[op_id])))
    return out


def evaluate_tuple(
    prog: LogicalProgram, inputs: dict[str, list[Record]]
) -> dict[str, list[Record]]:
    """Record-at-a-time semantics over arrival order."""
    if prog.mode is not Mode.TUPLE_STREAM:
        raise InvalidMode("evaluate_tuple needs a tuple-stream program")
    values: dict[str, list[Record]] = {}
    for op in prog.ops.values():
        kind = op.kind
        if kind is OpKind.SOURCE:
            values[op.op_id] = list(inputs[op.params["input_name"]])
            continue
        (ref,) = op.upstream
        up = inputs[ref.name] if isinstance(ref, InputRef) else values[ref]
        if kind is OpKind.MAP:
            values[op.op_id] = [op.kernel(r) for r in up]
        elif kind is OpKind.FLAT_MAP:
            values[op.op_id] = [o for r in up for o in op.kernel(r)]
        elif kind is OpKind.FILTER:
            values[op.op_id] = [r for r in up if op.kernel(r)]
        elif kind is OpKind.WINDOW:
            values[op.op_id] = [
                Record(None, [window_member_value(m) for m in w])
                for w in windows(up, op.params["spec"])
            ]
        elif kind is OpKind.MAP_WITH_STATE:
            cells = _StateCells(op.params["init"])
            values[op.op_id] = [cells.step(op.kernel, r) for r in up]
        elif kind is OpKind.SINK:
            values[op.op_id] = up
        else:
            raise InvalidMode(f"{kind.value} is not defined on tuple streams")
    return {name: values[op_id] for name, op_id in prog.outputs.items()}


def evaluate(prog: LogicalProgram, inputs):
    if prog.mode is Mode.BATCH:
        return evaluate_batch(prog, inputs)
    if prog.mode is Mode.MICRO_BATCH_STREAM:
        return evaluate_microbatch(prog, inputs)
    return evaluate_tuple(prog, inputs)


def evaluate_topology(topo, bindings=None, max_firings: int = 1_000_000):
    """Deterministic single-threaded simulation of a topology.

    Spouts are drained round-robin, one record per pass; from-any bolts pick
    the lowest-index non-empty channel.  The result fixes the reference bag;
    interleaving-dependent order is whatever this particular schedule gives.
    Replication hints are ignored: they change execution, not meaning.
    """
    from collections import deque

    from .errors import StallError
    from .topology import BoltState, Topology

    assert isinstance(topo, Topology)
    issues = topo.validate()
    if issues:
        raise GraphError("; ".join(issues))

    def make_puller(name: str):
        if bindings is not None and name in bindings:
            it = iter(bindings[name])
            return lambda: next(it, None)
        return topo.spouts[name].generator

    pullers = {name: make_puller(name) for name in topo.spouts}
    exhausted: set[str] = set()
    channels: dict[int, deque] = {i: deque() for i in range(len(topo.edges))}
    in_edges = {
        name: [i for i, e in enumerate(topo.edges) if e.dst == name]
        for name in topo.bolts
    }
    out_edges = {
        name: [i for i, e in enumerate(topo.edges) if e.src == name]
        for name in list(topo.spouts) + list(topo.bolts)
    }
    states = {
        name: BoltState(b.initial_state) if b.stateful else None
        for name, b in topo.bolts.items()
    }
    collected: dict[str, list[Record]] = {
        name: [] for name in topo.bolts if not out_edges[name]
    }
    firings = 0

    def emit_from(name: str):
        edges = out_edges[name]

        def emit(record: Record, to: Optional[str] = None):
            if not edges:
                collected[name].append(record)
                return
            if to is not None and all(topo.edges[i].dst != to for i in edges):
                raise InvalidArgument(f"{name!r} has no successor named {to!r}")
            for i in edges:
                if to is None or topo.edges[i].dst == to:
                    channels[i].append(record)

        return emit

    while True:
        progress = False
        for name in topo.spouts:
            if name in exhausted:
                continue
            r = pullers[name]()
            if r is None:
                exhausted.add(name)
            else:
                emit = emit_from(name)
                emit(r)
                progress = True
        for name, bolt in topo.bolts.items():
            ports = in_edges[name]
            consumed = None
            if bolt.consume_policy is ConsumePolicy.FROM_ANY:
                for i in ports:
                    if channels[i]:
                        consumed = [(topo.edges[i].src, channels[i].popleft())]
                        break
            else:
                if ports and all(channels[i] for i in ports):
                    consumed = [(topo.edges[i].src, channels[i].popleft()) for i in ports]
            if consumed is None:
                continue
            bolt.kernel(consumed, emit_from(name), states[name])
            progress = True
            firings += 1
            if firings > max_firings:
                raise StallError("topology simulation exceeded the firing budget")
        if not progress and len(exhausted) == len(topo.spouts):
            break
    return collected
