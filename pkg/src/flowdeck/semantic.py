"""Semantic dataflow graphs: one actor per operator, annotated for execution.

This is the middle layer: logical programs and topologies both translate
into a SemanticGraph, which the planner then expands into an ExecutionPlan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .errors import GraphError, InvalidArgument
from .kernels import Kernel
from .logical import (
    ELEMENTWISE_KINDS,
    InputRef,
    LogicalProgram,
    Mode,
    OpKind,
    SHUFFLE_KINDS,
)


class Granularity(Enum):
    COLLECTION = "collection"
    MICRO_BATCH = "microbatch"
    TUPLE = "tuple"


class ConsumePolicy(Enum):
    FROM_ALL = "from_all"
    FROM_ANY = "from_any"


class OutputPolicy(Enum):
    BROADCAST = "broadcast"
    HASH_PARTITION = "hash_partition"
    FORWARD = "forward"


_MODE_GRANULARITY = {
    Mode.BATCH: Granularity.COLLECTION,
    Mode.MICRO_BATCH_STREAM: Granularity.MICRO_BATCH,
    Mode.TUPLE_STREAM: Granularity.TUPLE,
}

_LABELS = {
    OpKind.SOURCE: "source",
    OpKind.MAP: "map",
    OpKind.FLAT_MAP: "flatMap",
    OpKind.FILTER: "filter",
    OpKind.GROUP_BY_KEY: "groupByKey",
    OpKind.REDUCE_BY_KEY: "reduceByKey",
    OpKind.REDUCE: "reduce",
    OpKind.JOIN: "join",
    OpKind.MAP_WITH_STATE: "mapWithState",
    OpKind.WINDOW: "window",
    OpKind.ITERATE: "iterate",
    OpKind.SINK: "sink",
}

STATEFUL_KINDS = {OpKind.MAP_WITH_STATE, OpKind.WINDOW}


@dataclass
class ActorSpec:
    """What an actor computes; interpreted by the runtime behaviors."""

    kind: str
    kernel: Optional[Callable] = None
    params: dict = field(default_factory=dict)


@dataclass
class SemanticActor:
    actor_id: str
    label: str
    spec: ActorSpec
    granularity: Granularity
    consume_policy: ConsumePolicy = ConsumePolicy.FROM_ALL
    output_policy: OutputPolicy = OutputPolicy.BROADCAST
    stateful: bool = False
    hierarchical_body: Optional["SemanticGraph"] = None


@dataclass(frozen=True)
class SemanticEdge:
    src: str
    dst: str
    dst_port: int = 0
    loop: bool = False
    # replication routing hint carried over from topology edges
    routing: Optional[str] = None


class SemanticGraph:
    def __init__(self, name: str = "graph"):
        self.name = name
        self.actors: dict[str, SemanticActor] = {}
        self.edges: list[SemanticEdge] = []
        # external data enters here: input name -> (actor id, port)
        self.input_bindings: dict[str, tuple[str, int]] = {}
        # results leave here: output name -> actor id
        self.output_bindings: dict[str, str] = {}

    def add_actor(self, actor: SemanticActor) -> None:
        if actor.actor_id in self.actors:
            raise GraphError(f"duplicate actor id {actor.actor_id!r}")
        self.actors[actor.actor_id] = actor

    def add_edge(self, edge: SemanticEdge) -> None:
        if edge.src not in self.actors or edge.dst not in self.actors:
            raise GraphError(f"edge endpoints must exist: {edge.src}->{edge.dst}")
        self.edges.append(edge)

    def predecessors(self, actor_id: str) -> list[SemanticEdge]:
        return sorted(
            (e for e in self.edges if e.dst == actor_id),
            key=lambda e: e.dst_port,
        )

    def successors(self, actor_id: str) -> list[SemanticEdge]:
        return [e for e in self.edges if e.src == actor_id]

    def topo_order(self) -> list[str]:
        """Actor ids in dependency order; loop edges are ignored."""
        indeg = {a: 0 for a in self.actors}
        for e in self.edges:
            if not e.loop:
                indeg[e.dst] += 1
        ready = [a for a, d in indeg.items() if d == 0]
        order = []
        while ready:
            a = ready.pop(0)
            order.append(a)
            for e in self.edges:
                if e.loop or e.src != a:
                    continue
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    ready.append(e.dst)
        if len(order) != len(self.actors):
            raise GraphError("graph is cyclic (after excluding loop edges)")
        return order

    def validate(self) -> None:
        self.topo_order()
        for e in self.edges:
            src, dst = self.actors[e.src], self.actors[e.dst]
            if src.granularity is not dst.granularity:
                raise GraphError(
                    f"granularity mismatch on {e.src}->{e.dst}: "
                    f"{src.granularity.value} vs {dst.granularity.value}"
                )
        for a in self.actors.values():
            if (
                a.consume_policy is ConsumePolicy.FROM_ANY
                and a.granularity is not Granularity.TUPLE
            ):
                raise GraphError(
                    f"{a.actor_id}: from-any consumption needs tuple granularity"
                )
            if a.hierarchical_body is not None:
                body = a.hierarchical_body
                if len(body.input_bindings) != 1 or len(body.output_bindings) != 1:
                    raise GraphError(
                        f"{a.actor_id}: hierarchical body needs exactly one "
                        "input and one output"
                    )
                body.validate()


def translate(prog: LogicalProgram) -> SemanticGraph:
    """One semantic actor per logical operator; ids are the op ids, so
    translating twice yields identical graphs."""
    g = SemanticGraph(name=prog.name)
    gran = _MODE_GRANULARITY[prog.mode]

    for op in prog.ops.values():
        spec = ActorSpec(op.kind.value, op.kernel, dict(op.params))
        body = None
        if op.kind is OpKind.ITERATE:
            body = translate(op.params["body"])
            spec.params.pop("body", None)
        label = _LABELS[op.kind]
        if op.kernel is not None and getattr(op.kernel, "name", None):
            label = f"{label}<{op.kernel.name}>"
        g.add_actor(
            SemanticActor(
                actor_id=op.op_id,
                label=label,
                spec=spec,
                granularity=gran,
                stateful=op.kind in STATEFUL_KINDS,
                hierarchical_body=body,
            )
        )

    for op in prog.ops.values():
        for port, ref in enumerate(op.upstream):
            if isinstance(ref, InputRef):
                g.input_bindings[ref.name] = (op.op_id, port)
            else:
                g.add_edge(SemanticEdge(ref, op.op_id, dst_port=port))
        if op.kind is OpKind.SOURCE:
            g.input_bindings[op.params["input_name"]] = (op.op_id, 0)

    # output policy: hash into shuffles, forward for a single plain successor
    for actor_id, actor in g.actors.items():
        succ = g.successors(actor_id)
        if any(
            g.actors[e.dst].spec.kind in {k.value for k in SHUFFLE_KINDS}
            for e in succ
        ):
            actor.output_policy = OutputPolicy.HASH_PARTITION
        elif len(succ) == 1:
            actor.output_policy = OutputPolicy.FORWARD
        else:
            actor.output_policy = OutputPolicy.BROADCAST

    g.output_bindings = dict(prog.outputs)
    g.validate()
    return g


_NON_INTENSIVE_KINDS = {"map", "flat_map", "filter", "fused"}


def _fusable(g: SemanticGraph, actor: SemanticActor, hints: dict[str, bool]) -> bool:
    if actor.stateful or actor.hierarchical_body is not None:
        return False
    intensive = hints.get(actor.actor_id)
    if intensive is None:
        intensive = actor.spec.kind not in _NON_INTENSIVE_KINDS
    return not intensive


def fuse(g: SemanticGraph, cost_hints: Optional[dict[str, bool]] = None) -> SemanticGraph:
    """Collapse maximal chains of adjacent cheap stateless actors.

    cost_hints maps actor id -> intensive?  Unhinted actors default by kind:
    map/flatMap/filter count as cheap, everything else as intensive.  Fusion
    never crosses a hash-partition edge, a stateful actor, or a hierarchical
    actor, and only applies along single-successor/single-predecessor links
    of equal granularity.
    """
    hints = cost_hints or {}
    order = g.topo_order()

    # build chains greedily along the topo order
    chain_of: dict[str, list[str]] = {}
    chains: list[list[str]] = []
    for actor_id in order:
        actor = g.actors[actor_id]
        if not _fusable(g, actor, hints):
            continue
        preds = [e for e in g.predecessors(actor_id) if not e.loop]
        extend = None
        if len(preds) == 1:
            p = preds[0].src
            if (
                p in chain_of
                and len(g.successors(p)) == 1
                and g.actors[p].output_policy is not OutputPolicy.HASH_PARTITION
                and g.actors[p].granularity is actor.granularity
            ):
                extend = chain_of[p]
        if extend is not None:
            extend.append(actor_id)
            chain_of[actor_id] = extend
        else:
            chain = [actor_id]
            chains.append(chain)
            chain_of[actor_id] = chain

    merged = [c for c in chains if len(c) > 1]
    if not merged:
        return g

    out = SemanticGraph(name=g.name)
    replacement: dict[str, str] = {}
    for chain in merged:
        fused_id = "fuse_" + "_".join(chain)
        for member in chain:
            replacement[member] = fused_id

    for actor_id in order:
        if actor_id in replacement:
            fused_id = replacement[actor_id]
            if fused_id in out.actors:
                continue
            chain = next(c for c in merged if replacement[c[0]] == fused_id)
            members = [g.actors[m] for m in chain]
            spec = ActorSpec(
                "fused",
                None,
                {"stages": [m.spec for m in members]},
            )
            last = members[-1]
            out.add_actor(
                SemanticActor(
                    actor_id=fused_id,
                    label="+".join(m.label.split("<")[0] for m in members),
                    spec=spec,
                    granularity=last.granularity,
                    consume_policy=members[0].consume_policy,
                    output_policy=last.output_policy,
                )
            )
        else:
            a = g.actors[actor_id]
            out.add_actor(
                SemanticActor(
                    actor_id=a.actor_id,
                    label=a.label,
                    spec=a.spec,
                    granularity=a.granularity,
                    consume_policy=a.consume_policy,
                    output_policy=a.output_policy,
                    stateful=a.stateful,
                    hierarchical_body=a.hierarchical_body,
                )
            )

    def rep(x: str) -> str:
        return replacement.get(x, x)

    seen = set()
    for e in g.edges:
        src, dst = rep(e.src), rep(e.dst)
        if src == dst and not e.loop:
            continue  # edge interior to a fused chain
        key = (src, dst, e.dst_port, e.loop)
        if key in seen:
            continue
        seen.add(key)
        out.add_edge(SemanticEdge(src, dst, e.dst_port, e.loop, e.routing))

    out.input_bindings = {
        name: (rep(a), port) for name, (a, port) in g.input_bindings.items()
    }
    out.output_bindings = {name: rep(a) for name, a in g.output_bindings.items()}
    out.validate()
    return out


def _dot_node(actor: SemanticActor, indent: str = "  ") -> str:
    label = (
        f"{actor.label}\\n{actor.granularity.value}/{actor.output_policy.value}"
    )
    attrs = [f'label="{label}"']
    if actor.stateful:
        attrs.append("shape=box")
    return f'{indent}"{actor.actor_id}" [{", ".join(attrs)}];'


def to_dot(g: SemanticGraph) -> str:
    """Graphviz rendering: loop edges dashed, hierarchical actors as clusters."""
    lines = [f'digraph "{g.name}" {{']
    for actor in g.actors.values():
        if actor.hierarchical_body is not None:
            body = actor.hierarchical_body
            lines.append(f'  subgraph "cluster_{actor.actor_id}" {{')
            lines.append(f'    label="{actor.label}";')
            lines.append(_dot_node(actor, indent="    "))
            for inner in body.actors.values():
                lines.append(_dot_node(inner, indent="    "))
            for e in body.edges:
                style = " [style=dashed]" if e.loop else ""
                lines.append(f'    "{e.src}" -> "{e.dst}"{style};')
            # driver feeds the body input; body output loops back
            (in_actor, _), = body.input_bindings.values()
            (out_actor,) = body.output_bindings.values()
            lines.append(f'    "{actor.actor_id}" -> "{in_actor}";')
            lines.append(f'    "{out_actor}" -> "{actor.actor_id}" [style=dashed];')
            lines.append("  }")
        else:
            lines.append(_dot_node(actor))
    for e in g.edges:
        style = " [style=dashed]" if e.loop else ""
        lines.append(f'  "{e.src}" -> "{e.dst}"{style};')
    lines.append("}")
    return "\n".join(lines)
