"""Topological API: spouts, bolts, and explicit wiring at tuple granularity.

Unlike the declarative layer this exposes the network itself: users place
actors, connect channels, pick consumption policies, and may close cycles
(each cycle must contain a bolt declared as its exit so the loop can wind
down).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .errors import GraphError, InvalidArgument
from .semantic import (
    ActorSpec,
    ConsumePolicy,
    Granularity,
    SemanticActor,
    SemanticEdge,
    SemanticGraph,
)
from .values import Record, Value


class Routing(Enum):
    ROUND_ROBIN = "round_robin"
    HASH_BY_KEY = "hash"


class BoltState:
    """Keyed state view handed to stateful bolt kernels.

    Backed by a Value: a list of (key, value) pairs.  Dumps are sorted
    canonically so checkpoints compare stably.
    """

    def __init__(self, value: Value):
        from .values import canon_bytes

        self._canon = canon_bytes
        self._cells: dict[bytes, tuple[Value, Value]] = {}
        if not isinstance(value, list):
            raise InvalidArgument("bolt state must be a list of (key, value) pairs")
        for entry in value:
            if not isinstance(entry, tuple):
                raise InvalidArgument("bolt state entries must be pairs")
            k, v = entry
            self._cells[self._canon(k)] = (k, v)

    def get(self, key: Value, default: Optional[Value] = None) -> Optional[Value]:
        entry = self._cells.get(self._canon(key))
        return entry[1] if entry is not None else default

    def set(self, key: Value, value: Value) -> None:
        self._cells[self._canon(key)] = (key, value)

    def dump(self) -> Value:
        return [self._cells[c] for c in sorted(self._cells)]


@dataclass
class Spout:
    """Pull-based source: generator() returns the next Record, or None when done."""

    name: str
    generator: Callable[[], Optional[Record]]


@dataclass
class Bolt:
    """Tuple processor.

    kernel(inputs, emit, state) is called once per activation:
      inputs  list of (upstream name, Record) consumed this firing
              (one entry under from-any, one per input under from-all)
      emit    emit(record, to=None) sends downstream; `to` names one
              successor, default is all of them
      state   BoltState view, or None for stateless bolts
    """

    name: str
    kernel: Callable
    consume_policy: ConsumePolicy = ConsumePolicy.FROM_ANY
    initial_state: Optional[Value] = None
    loop_exit: bool = False
    replication: int = 1

    @property
    def stateful(self) -> bool:
        return self.initial_state is not None


@dataclass(frozen=True)
class TopologyEdge:
    src: str
    dst: str
    routing: Routing = Routing.ROUND_ROBIN


class Topology:
    def __init__(self, name: str = "topology"):
        self.name = name
        self.spouts: dict[str, Spout] = {}
        self.bolts: dict[str, Bolt] = {}
        self.edges: list[TopologyEdge] = []

    def _check_new_name(self, name: str) -> None:
        if name in self.spouts or name in self.bolts:
            raise InvalidArgument(f"duplicate node name {name!r}")

    def add_spout(self, name: str, generator: Callable[[], Optional[Record]]) -> Spout:
        self._check_new_name(name)
        spout = Spout(name, generator)
        self.spouts[name] = spout
        return spout

    def add_bolt(
        self,
        name: str,
        kernel: Callable,
        *,
        consume_policy: ConsumePolicy = ConsumePolicy.FROM_ANY,
        initial_state: Optional[Value] = None,
        loop_exit: bool = False,
        replication: int = 1,
    ) -> Bolt:
        self._check_new_name(name)
        if replication < 1:
            raise InvalidArgument(f"replication must be >= 1, got {replication}")
        bolt = Bolt(name, kernel, consume_policy, initial_state, loop_exit, replication)
        self.bolts[name] = bolt
        return bolt

    def connect(self, src: str, dst: str, routing: Routing = Routing.ROUND_ROBIN) -> None:
        if src not in self.spouts and src not in self.bolts:
            raise InvalidArgument(f"unknown source endpoint {src!r}")
        if dst not in self.bolts:
            if dst in self.spouts:
                raise InvalidArgument(f"cannot connect into spout {dst!r}")
            raise InvalidArgument(f"unknown destination endpoint {dst!r}")
        self.edges.append(TopologyEdge(src, dst, routing))

    # -- analysis ------------------------------------------------------------

    def inputs_of(self, name: str) -> list[TopologyEdge]:
        return [e for e in self.edges if e.dst == name]

    def outputs_of(self, name: str) -> list[TopologyEdge]:
        return [e for e in self.edges if e.src == name]

    def _sccs(self) -> list[list[str]]:
        """Tarjan's strongly connected components over the node graph."""
        index: dict[str, int] = {}
        low: dict[str, int] = {}
        on_stack: set[str] = set()
        stack: list[str] = []
        out: list[list[str]] = []
        counter = [0]
        succ: dict[str, list[str]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)

        def strongconnect(v: str) -> None:
            index[v] = low[v] = counter[0]
            counter[0] += 1
            stack.append(v)
            on_stack.add(v)
            for w in succ.get(v, ()):
                if w not in index:
                    strongconnect(w)
                    low[v] = min(low[v], low[w])
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)

        for v in list(self.spouts) + list(self.bolts):
            if v not in index:
                strongconnect(v)
        return out

    def validate(self) -> list[str]:
        """Structural diagnostics; an empty list means runnable."""
        issues = []
        for name in self.bolts:
            if not self.inputs_of(name):
                issues.append(f"bolt {name!r} has no inputs")
        self_loops = {e.src for e in self.edges if e.src == e.dst}
        for comp in self._sccs():
            cyclic = len(comp) > 1 or comp[0] in self_loops
            if not cyclic:
                continue
            if not any(
                n in self.bolts and self.bolts[n].loop_exit for n in comp
            ):
                issues.append(
                    "cycle through "
                    + ",".join(sorted(comp))
                    + " has no declared loop-exit bolt"
                )
        return issues

    # -- translation -----------------------------------------------------------

    def as_semantic_graph(self) -> SemanticGraph:
        """Tuple-granularity graph: node and edge counts carry over 1:1.

        Terminal bolts are marked as the graph's outputs; collection of
        their emissions is added by the planner, not here.
        """
        issues = self.validate()
        if issues:
            raise GraphError("; ".join(issues))

        g = SemanticGraph(name=self.name)
        for spout in self.spouts.values():
            g.add_actor(
                SemanticActor(
                    actor_id=spout.name,
                    label=spout.name,
                    spec=ActorSpec("spout", spout.generator),
                    granularity=Granularity.TUPLE,
                )
            )
            g.input_bindings[spout.name] = (spout.name, 0)
        for bolt in self.bolts.values():
            g.add_actor(
                SemanticActor(
                    actor_id=bolt.name,
                    label=bolt.name,
                    spec=ActorSpec(
                        "bolt",
                        bolt.kernel,
                        {
                            "initial_state": bolt.initial_state,
                            "loop_exit": bolt.loop_exit,
                            "replication": bolt.replication,
                        },
                    ),
                    granularity=Granularity.TUPLE,
                    consume_policy=bolt.consume_policy,
                    stateful=bolt.stateful,
                )
            )

        # a port per incoming edge, in connect() order; loop edges are the
        # ones that close a cycle against insertion order
        order = {name: i for i, name in enumerate(list(self.spouts) + list(self.bolts))}
        port_counter: dict[str, int] = {}
        for e in self.edges:
            port = port_counter.get(e.dst, 0)
            port_counter[e.dst] = port + 1
            loop = order[e.dst] <= order[e.src]
            g.add_edge(
                SemanticEdge(e.src, e.dst, dst_port=port, loop=loop, routing=e.routing.value)
            )

        g.topo_order()  # raises if loop marking left a residual cycle
        for name in self.bolts:
            if not self.outputs_of(name):
                g.output_bindings[name] = name
        g.validate()
        return g
