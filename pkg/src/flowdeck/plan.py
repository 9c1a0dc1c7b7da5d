"""Execution plans: semantic graphs expanded for parallel execution.

Expansion replicates data-parallel actors, synthesizes the plumbing actors
(scatter, gather, reduce combine, input injectors, output collectors), lays
out every channel with its routing discipline, and, for staged execution,
assigns barrier stages with boundaries at the key-partitioned edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import GraphError, InvalidArgument, InvalidMode
from .kernels import Kernel
from .semantic import (
    ActorSpec,
    ConsumePolicy,
    Granularity,
    OutputPolicy,
    SemanticGraph,
)


class PlanMode(Enum):
    BSP = "bsp"
    PIPELINED = "pipelined"


class IterationStrategy(Enum):
    BARRIER = "barrier"
    TAGGED = "tagged"


class Role(Enum):
    WORKER = "worker"
    SCATTER = "scatter"
    GATHER = "gather"
    DRIVER = "driver"
    INJECT = "inject"
    COLLECT = "collect"


class Discipline(Enum):
    FORWARD = "forward"        # exactly one channel
    HASH = "hash"              # pick or split by key hash
    ROUND_ROBIN = "round_robin"  # rotate per emission (tuple granularity)
    SPLIT = "split"            # the behavior targets channels itself


# spec kinds that replicate with the plan's parallelism
_DATA_PARALLEL = {
    "map",
    "flat_map",
    "filter",
    "fused",
    "group_by_key",
    "reduce_by_key",
    "join",
}
_SHUFFLE = {"group_by_key", "reduce_by_key", "join"}


@dataclass
class PlanActor:
    actor_id: str
    role: Role
    spec: ActorSpec
    granularity: Granularity
    consume_policy: ConsumePolicy = ConsumePolicy.FROM_ALL
    origin: Optional[str] = None
    replica: int = 0
    replicas: int = 1
    stateful: bool = False
    concurrent_ok: bool = False
    stage: int = 0
    label: str = ""


@dataclass
class PlanChannel:
    channel_id: str
    src: str
    dst: str
    dst_port: int = 0
    loop: bool = False


@dataclass
class RouteGroup:
    """One logical output of a plan actor: the channels one emission may take."""

    group_id: str
    src: str
    edge_key: str  # semantic id of the destination, for targeted emits
    discipline: Discipline
    channels: list[str]
    shuffle: bool = False


class ExecutionPlan:
    def __init__(
        self,
        name: str,
        mode: PlanMode,
        iteration: IterationStrategy,
        parallelism: int,
    ):
        self.name = name
        self.mode = mode
        self.iteration = iteration
        self.parallelism = parallelism
        self.actors: dict[str, PlanActor] = {}
        self.channels: dict[str, PlanChannel] = {}
        self.groups: dict[str, list[RouteGroup]] = {}
        # input name -> plan actor that emits the bound data
        self.input_bindings: dict[str, str] = {}
        # output name -> plan actor that accumulates results
        self.output_bindings: dict[str, str] = {}
        self.stages = 1

    # -- construction helpers ----------------------------------------------------

    def add_actor(self, actor: PlanActor) -> PlanActor:
        if actor.actor_id in self.actors:
            raise GraphError(f"duplicate plan actor {actor.actor_id!r}")
        if not actor.label:
            actor.label = actor.actor_id
        self.actors[actor.actor_id] = actor
        self.groups.setdefault(actor.actor_id, [])
        return actor

    def add_channel(self, src: str, dst: str, dst_port: int = 0, loop: bool = False) -> str:
        if src not in self.actors or dst not in self.actors:
            raise GraphError(f"channel endpoints must exist: {src}->{dst}")
        cid = f"c{len(self.channels)}:{src}>{dst}"
        self.channels[cid] = PlanChannel(cid, src, dst, dst_port, loop)
        return cid

    def add_group(
        self,
        src: str,
        edge_key: str,
        discipline: Discipline,
        channels: list[str],
        shuffle: bool = False,
    ) -> RouteGroup:
        if len(channels) == 1 and discipline in (Discipline.HASH, Discipline.ROUND_ROBIN):
            discipline = Discipline.FORWARD
        gid = f"g{sum(len(v) for v in self.groups.values())}:{src}"
        group = RouteGroup(gid, src, edge_key, discipline, channels, shuffle)
        self.groups[src].append(group)
        return group

    # -- queries -------------------------------------------------------------------

    def in_channels(self, actor_id: str) -> list[PlanChannel]:
        found = [c for c in self.channels.values() if c.dst == actor_id]
        found.sort(key=lambda c: c.dst_port)
        return found

    def ports_of(self, actor_id: str) -> dict[int, list[PlanChannel]]:
        ports: dict[int, list[PlanChannel]] = {}
        for c in self.in_channels(actor_id):
            ports.setdefault(c.dst_port, []).append(c)
        return ports

    def out_groups(self, actor_id: str) -> list[RouteGroup]:
        return self.groups.get(actor_id, [])

    def out_channels(self, actor_id: str) -> list[PlanChannel]:
        return [c for c in self.channels.values() if c.src == actor_id]

    def sources(self) -> list[str]:
        return [a for a in self.actors if not self.in_channels(a)]

    def topo_order(self) -> list[str]:
        indeg = {a: 0 for a in self.actors}
        for c in self.channels.values():
            if not c.loop:
                indeg[c.dst] += 1
        ready = [a for a, d in indeg.items() if d == 0]
        order: list[str] = []
        while ready:
            a = ready.pop(0)
            order.append(a)
            for c in self.channels.values():
                if c.loop or c.src != a:
                    continue
                indeg[c.dst] -= 1
                if indeg[c.dst] == 0:
                    ready.append(c.dst)
        if len(order) != len(self.actors):
            raise GraphError("plan is cyclic (after excluding loop channels)")
        return order

    def validate(self) -> None:
        self.topo_order()
        for a in self.actors.values():
            if a.role in (Role.WORKER, Role.COLLECT, Role.GATHER, Role.SCATTER, Role.DRIVER):
                emits = a.spec.kind in ("source", "spout", "inject")
                if not emits and not self.in_channels(a.actor_id):
                    raise GraphError(f"{a.actor_id} has no input channels")
        for groups in self.groups.values():
            for g in groups:
                if g.discipline is Discipline.FORWARD and len(g.channels) != 1:
                    raise GraphError(f"{g.group_id}: forward groups carry one channel")
                for cid in g.channels:
                    if cid not in self.channels:
                        raise GraphError(f"{g.group_id}: unknown channel {cid}")
        if self.mode is PlanMode.BSP:
            for c in self.channels.values():
                if c.loop:
                    continue
                s, d = self.actors[c.src].stage, self.actors[c.dst].stage
                if s > d:
                    raise GraphError(
                        f"stage order violated on {c.channel_id}: {s} -> {d}"
                    )

    def describe(self) -> dict:
        """Summary counts, used by the command line and a few tests."""
        roles: dict[str, int] = {}
        for a in self.actors.values():
            roles[a.role.value] = roles.get(a.role.value, 0) + 1
        return {
            "name": self.name,
            "mode": self.mode.value,
            "parallelism": self.parallelism,
            "actors": len(self.actors),
            "channels": len(self.channels),
            "stages": self.stages,
            "roles": roles,
        }


# -- expansion ---------------------------------------------------------------------


class _Expander:
    def __init__(
        self,
        graph: SemanticGraph,
        parallelism: int,
        mode: PlanMode,
        iteration: IterationStrategy,
    ):
        self.g = graph
        self.p = parallelism
        self.plan = ExecutionPlan(graph.name, mode, iteration, parallelism)
        # semantic id -> plan actor ids that accept its input tokens / emit its output
        self.in_anchor: dict[str, list[str]] = {}
        self.out_anchor: dict[str, list[str]] = {}

    # .. actor creation ..........................................................

    def replication_of(self, sem_id: str) -> int:
        actor = self.g.actors[sem_id]
        kind = actor.spec.kind
        if kind == "bolt":
            if actor.stateful:
                return 1
            return int(actor.spec.params.get("replication", 1))
        if actor.stateful or actor.hierarchical_body is not None:
            return 1
        if kind in _DATA_PARALLEL:
            return self.p
        return 1

    def make_workers(self, sem_id: str, prefix: str = "") -> None:
        actor = self.g.actors[sem_id]
        kind = actor.spec.kind

        if kind == "reduce":
            self.make_reduce(sem_id, prefix)
            return
        if actor.hierarchical_body is not None:
            self.make_driver(sem_id, prefix)
            return

        n = self.replication_of(sem_id)
        pid_base = prefix + sem_id
        ids = []
        for i in range(n):
            pid = pid_base if n == 1 else f"{pid_base}.{i}"
            label = actor.label if n == 1 else f"{actor.label}[{i}]"
            self.plan.add_actor(
                PlanActor(
                    actor_id=pid,
                    role=Role.WORKER,
                    spec=actor.spec,
                    granularity=actor.granularity,
                    consume_policy=actor.consume_policy,
                    origin=pid_base,
                    replica=i,
                    replicas=n,
                    stateful=actor.stateful,
                    label=label,
                )
            )
            ids.append(pid)
        self.in_anchor[prefix + sem_id] = ids
        self.out_anchor[prefix + sem_id] = ids

    def make_reduce(self, sem_id: str, prefix: str) -> None:
        actor = self.g.actors[sem_id]
        pid_base = prefix + sem_id
        partials = []
        for i in range(self.p):
            pid = f"{pid_base}.part" if self.p == 1 else f"{pid_base}.part{i}"
            self.plan.add_actor(
                PlanActor(
                    actor_id=pid,
                    role=Role.WORKER,
                    spec=ActorSpec("reduce_partial", actor.spec.kernel, dict(actor.spec.params)),
                    granularity=actor.granularity,
                    origin=pid_base,
                    replica=i,
                    replicas=self.p,
                    label=f"{actor.label}.part[{i}]",
                )
            )
            partials.append(pid)
        combine = f"{pid_base}.combine"
        self.plan.add_actor(
            PlanActor(
                actor_id=combine,
                role=Role.WORKER,
                spec=ActorSpec("reduce_combine", actor.spec.kernel, dict(actor.spec.params)),
                granularity=actor.granularity,
                origin=pid_base,
                label=f"{actor.label}.combine",
            )
        )
        for pid in partials:
            cid = self.plan.add_channel(pid, combine)
            self.plan.add_group(pid, sem_id + ".combine", Discipline.FORWARD, [cid])
        self.in_anchor[prefix + sem_id] = partials
        self.out_anchor[prefix + sem_id] = [combine]

    def make_driver(self, sem_id: str, prefix: str) -> None:
        actor = self.g.actors[sem_id]
        body = actor.hierarchical_body
        driver_id = prefix + sem_id
        tagged = self.plan.iteration is IterationStrategy.TAGGED
        body_prefix = driver_id + "/"

        if tagged:
            self.check_tagged_body(sem_id, body)

        self.plan.add_actor(
            PlanActor(
                actor_id=driver_id,
                role=Role.DRIVER,
                spec=actor.spec,
                granularity=actor.granularity,
                origin=driver_id,
                stateful=True,
                label=actor.label,
            )
        )

        body_p = 1 if tagged else self.p
        inner = _Expander(body, body_p, self.plan.mode, self.plan.iteration)
        inner.plan = self.plan  # share the plan, expand in place
        inner.in_anchor = self.in_anchor
        inner.out_anchor = self.out_anchor
        for inner_id in body.topo_order():
            inner.make_workers(inner_id, prefix=body_prefix)
        if tagged:
            for inner_id in body.actors:
                for pid in self.in_anchor[body_prefix + inner_id]:
                    self.plan.actors[pid].concurrent_ok = True
        for e in body.edges:
            inner.wire(
                body_prefix + e.src,
                body_prefix + e.dst,
                e.dst_port,
                body.actors[e.dst],
                loop=e.loop,
                prefix=body_prefix,
            )

        # the driver feeds the body's single input and hears its single output
        ((head_sem, head_port),) = body.input_bindings.values()
        (tail_sem,) = body.output_bindings.values()
        self.connect(
            [driver_id],
            self.in_anchor[body_prefix + head_sem],
            head_port,
            Granularity.COLLECTION,
            hint=None,
            loop=True,
            edge_key=body_prefix + head_sem,
            shuffle=False,
        )
        self.connect(
            self.out_anchor[body_prefix + tail_sem],
            [driver_id],
            1,
            Granularity.COLLECTION,
            hint=None,
            loop=True,
            edge_key=driver_id,
            shuffle=False,
        )
        self.in_anchor[driver_id] = [driver_id]
        self.out_anchor[driver_id] = [driver_id]

    def check_tagged_body(self, sem_id: str, body: SemanticGraph) -> None:
        for a in body.actors.values():
            if a.spec.kind in _SHUFFLE or a.spec.kind == "reduce":
                raise InvalidArgument(
                    f"{sem_id}: tagged iteration requires a shuffle-free body"
                )
            if a.stateful or a.hierarchical_body is not None:
                raise InvalidArgument(
                    f"{sem_id}: tagged iteration requires a stateless body"
                )

    # .. wiring ....................................................................

    def synth_scatter(self, src_pid: str, edge_key: str, loop: bool = False) -> str:
        sid = f"{src_pid}.split.{edge_key}"
        src = self.plan.actors[src_pid]
        self.plan.add_actor(
            PlanActor(
                actor_id=sid,
                role=Role.SCATTER,
                spec=ActorSpec("scatter"),
                granularity=src.granularity,
                label=f"split:{src.label}",
            )
        )
        cid = self.plan.add_channel(src_pid, sid, 0, loop)
        self.plan.add_group(src_pid, sid, Discipline.FORWARD, [cid])
        return sid

    def synth_gather(self, src_pids: list[str], edge_key: str, gran: Granularity, loop: bool) -> str:
        origin = self.plan.actors[src_pids[0]].origin or src_pids[0]
        gid = f"{origin}.merge.{edge_key}"
        self.plan.add_actor(
            PlanActor(
                actor_id=gid,
                role=Role.GATHER,
                spec=ActorSpec("gather"),
                granularity=gran,
                consume_policy=(
                    ConsumePolicy.FROM_ANY
                    if gran is Granularity.TUPLE
                    else ConsumePolicy.FROM_ALL
                ),
                label=f"merge:{origin}",
            )
        )
        for pid in src_pids:
            cid = self.plan.add_channel(pid, gid, 0, loop)
            self.plan.add_group(pid, gid, Discipline.FORWARD, [cid])
        return gid

    def connect(
        self,
        src_pids: list[str],
        dst_pids: list[str],
        port: int,
        gran: Granularity,
        hint: Optional[str],
        loop: bool,
        edge_key: str,
        shuffle: bool,
    ) -> None:
        if gran is Granularity.TUPLE:
            # per-record routing: a full bipartite channel matrix per source
            disc = Discipline.HASH if hint == "hash" else Discipline.ROUND_ROBIN
            for s in src_pids:
                cids = [self.plan.add_channel(s, d, port, loop) for d in dst_pids]
                self.plan.add_group(s, edge_key, disc, cids, shuffle=shuffle)
            return

        if shuffle:
            # each source splits its batch by key hash across all destinations
            for s in src_pids:
                cids = [self.plan.add_channel(s, d, port, loop) for d in dst_pids]
                self.plan.add_group(s, edge_key, Discipline.HASH, cids, shuffle=True)
            return

        if len(src_pids) == len(dst_pids):
            for s, d in zip(src_pids, dst_pids):
                cid = self.plan.add_channel(s, d, port, loop)
                self.plan.add_group(s, edge_key, Discipline.FORWARD, [cid])
            return

        if len(src_pids) == 1 and len(dst_pids) > 1:
            sid = self.synth_scatter(src_pids[0], edge_key, loop)
            cids = [self.plan.add_channel(sid, d, port, loop) for d in dst_pids]
            self.plan.add_group(sid, edge_key, Discipline.SPLIT, cids)
            return

        if len(src_pids) > 1 and len(dst_pids) == 1:
            gid = self.synth_gather(src_pids, edge_key, gran, loop)
            cid = self.plan.add_channel(gid, dst_pids[0], port, loop)
            self.plan.add_group(gid, edge_key, Discipline.FORWARD, [cid])
            return

        # mismatched fan: funnel through a gather, then split again
        gid = self.synth_gather(src_pids, edge_key, gran, loop)
        sid = self.synth_scatter(gid, edge_key, loop)
        cids = [self.plan.add_channel(sid, d, port, loop) for d in dst_pids]
        self.plan.add_group(sid, edge_key, Discipline.SPLIT, cids)

    def wire(
        self,
        src_key: str,
        dst_key: str,
        port: int,
        dst_sem,
        loop: bool,
        prefix: str = "",
        hint: Optional[str] = None,
    ) -> None:
        shuffle = dst_sem.spec.kind in _SHUFFLE or hint == "hash"
        self.connect(
            self.out_anchor[src_key],
            self.in_anchor[dst_key],
            port,
            dst_sem.granularity,
            hint,
            loop,
            edge_key=dst_key,
            shuffle=shuffle,
        )

    # .. bindings ....................................................................

    def bind_inputs(self) -> None:
        for name, (sem_id, port) in self.g.input_bindings.items():
            sem = self.g.actors[sem_id]
            if sem.spec.kind in ("source", "spout"):
                (pid,) = self.in_anchor[sem_id]
                self.plan.actors[pid].spec.params["input"] = name
                self.plan.input_bindings[name] = pid
                continue
            inj = f"in:{name}"
            self.plan.add_actor(
                PlanActor(
                    actor_id=inj,
                    role=Role.INJECT,
                    spec=ActorSpec("inject", None, {"input": name}),
                    granularity=sem.granularity,
                    label=inj,
                )
            )
            self.plan.input_bindings[name] = inj
            shuffle = sem.spec.kind in _SHUFFLE
            self.connect(
                [inj],
                self.in_anchor[sem_id],
                port,
                sem.granularity,
                hint=None,
                loop=False,
                edge_key=sem_id,
                shuffle=shuffle,
            )

    def bind_outputs(self) -> None:
        for name, sem_id in self.g.output_bindings.items():
            sem = self.g.actors[sem_id]
            if sem.spec.kind == "sink":
                (pid,) = self.out_anchor[sem_id]
                self.plan.actors[pid].spec.params["output"] = name
                self.plan.output_bindings[name] = pid
                continue
            col = f"out:{name}"
            self.plan.add_actor(
                PlanActor(
                    actor_id=col,
                    role=Role.COLLECT,
                    spec=ActorSpec("collect", None, {"output": name}),
                    granularity=sem.granularity,
                    consume_policy=(
                        ConsumePolicy.FROM_ANY
                        if sem.granularity is Granularity.TUPLE
                        else ConsumePolicy.FROM_ALL
                    ),
                    label=col,
                )
            )
            self.plan.output_bindings[name] = col
            self.connect(
                self.out_anchor[sem_id],
                [col],
                0,
                sem.granularity,
                hint=None,
                loop=False,
                edge_key=col,
                shuffle=False,
            )

    # .. stages ......................................................................

    def assign_stages(self) -> None:
        plan = self.plan
        if plan.mode is not PlanMode.BSP:
            plan.stages = 1
            return
        boundary: set[str] = set()
        for groups in plan.groups.values():
            for g in groups:
                if g.shuffle:
                    boundary.update(g.channels)
        stage = {a: 0 for a in plan.actors}
        for a in plan.topo_order():
            for c in plan.in_channels(a):
                if c.loop:
                    continue
                s = stage[c.src] + (1 if c.channel_id in boundary else 0)
                stage[a] = max(stage[a], s)
        # an iteration cluster runs inside its driver's stage
        for a, actor in plan.actors.items():
            if actor.role is Role.DRIVER:
                for b in plan.actors:
                    if b.startswith(a + "/") or b.startswith(a + ".split."):
                        stage[b] = stage[a]
        for a, s in stage.items():
            plan.actors[a].stage = s
        plan.stages = max(stage.values()) + 1 if stage else 1

    def run(self) -> ExecutionPlan:
        self.g.validate()
        if self.plan.mode is PlanMode.BSP:
            for a in self.g.actors.values():
                if a.granularity is Granularity.TUPLE:
                    raise InvalidMode(
                        "staged execution applies to collection and "
                        "micro-batch granularities only"
                    )
        for sem_id in self.g.topo_order():
            self.make_workers(sem_id)
        for e in self.g.edges:
            self.wire(e.src, e.dst, e.dst_port, self.g.actors[e.dst], e.loop, hint=e.routing)
        self.bind_inputs()
        self.bind_outputs()
        self.assign_stages()
        self.plan.validate()
        return self.plan


def expand(
    graph: SemanticGraph,
    parallelism: int = 1,
    mode: PlanMode = PlanMode.PIPELINED,
    iteration: IterationStrategy = IterationStrategy.BARRIER,
) -> ExecutionPlan:
    """Expand a semantic graph into a runnable plan."""
    if parallelism < 1:
        raise InvalidArgument(f"parallelism must be >= 1, got {parallelism}")
    return _Expander(graph, parallelism, mode, iteration).run()


# -- rendering ---------------------------------------------------------------------


_ROLE_SHAPES = {
    Role.SCATTER: "triangle",
    Role.GATHER: "invtriangle",
    Role.DRIVER: "doublecircle",
    Role.INJECT: "cds",
    Role.COLLECT: "note",
}


def plan_to_dot(plan: ExecutionPlan) -> str:
    lines = [f'digraph "{plan.name}" {{']
    by_stage: dict[int, list[PlanActor]] = {}
    for a in plan.actors.values():
        by_stage.setdefault(a.stage, []).append(a)

    def node(a: PlanActor, indent: str) -> str:
        attrs = [f'label="{a.label}"']
        shape = _ROLE_SHAPES.get(a.role)
        if a.stateful and shape is None:
            shape = "box"
        if shape:
            attrs.append(f"shape={shape}")
        return f'{indent}"{a.actor_id}" [{", ".join(attrs)}];'

    if plan.mode is PlanMode.BSP and plan.stages > 1:
        for s in sorted(by_stage):
            lines.append(f'  subgraph "cluster_stage{s}" {{')
            lines.append(f'    label="stage {s}";')
            for a in by_stage[s]:
                lines.append(node(a, "    "))
            lines.append("  }")
    else:
        for a in plan.actors.values():
            lines.append(node(a, "  "))
    for c in plan.channels.values():
        style = " [style=dashed]" if c.loop else ""
        lines.append(f'  "{c.src}" -> "{c.dst}"{style};')
    lines.append("}")
    return "\n".join(lines)
