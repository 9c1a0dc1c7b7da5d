"""Actor behaviors: firing rules and the work done per firing.

A behavior never touches channels.  The engine shows it the channel heads
(`poll`), pops what the returned firing asks for, and hands the envelopes
to `fire`, which returns emissions for the engine to route.  Keeping the
split strict is what lets the same behaviors run under both engines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..data import (
    EOS,
    CollectionToken,
    EndOfStream,
    MicroBatchToken,
    Multiset,
    StreamChunk,
    TupleToken,
    is_data,
)
from ..errors import (
    EmptyInput,
    GraphError,
    InvalidArgument,
    KeyedInputRequired,
)
from ..plan import Discipline, ExecutionPlan, PlanActor, RouteGroup
from ..reference import (
    eval_group_by_key,
    eval_join,
    eval_reduce_by_key,
    window_member_value,
)
from ..semantic import ConsumePolicy, Granularity
from ..topology import BoltState
from ..values import Record, Value, canon_bytes, stable_hash
from .channels import Envelope


@dataclass(frozen=True)
class Firing:
    pops: tuple[str, ...]  # channel ids to pop one envelope from, in order
    phase: str = "data"


@dataclass
class Emission:
    token: object
    group: Optional[RouteGroup] = None  # route by the group's discipline
    channel: Optional[str] = None  # or deliver to this exact channel


@dataclass
class FireResult:
    emissions: list[Emission] = field(default_factory=list)
    halt: bool = False
    events: list[dict] = field(default_factory=list)


def _unwrap(tok) -> tuple[list[Record], Optional[int], Optional[int], Optional[int]]:
    """(records, seq, tag, tag_seq) of a data token."""
    if isinstance(tok, CollectionToken):
        return list(tok.batch.records), None, tok.tag, tok.tag_seq
    if isinstance(tok, MicroBatchToken):
        return list(tok.chunk.batch.records), tok.chunk.seq, tok.tag, tok.tag_seq
    raise GraphError(f"expected a batch-bearing token, got {tok!r}")


def _wrap(gran: Granularity, records: list[Record], seq, tag, tag_seq):
    if gran is Granularity.MICRO_BATCH:
        return MicroBatchToken(StreamChunk(seq, Multiset(records)), tag, tag_seq)
    return CollectionToken(Multiset(records), tag, tag_seq)


def apply_stages(specs, records: list[Record]) -> list[Record]:
    """Run records through a chain of elementwise operator specs."""
    cur = records
    for spec in specs:
        k = spec.kernel
        if spec.kind == "map":
            cur = [k(r) for r in cur]
        elif spec.kind == "flat_map":
            cur = [o for r in cur for o in k(r)]
        elif spec.kind == "filter":
            cur = [r for r in cur if k(r)]
        else:
            raise GraphError(f"not an elementwise stage: {spec.kind}")
    return cur


class StateCells:
    """Per-key state for stateful record operators, dumpable as a Value.

    The dump is an association list sorted by canonical key; the cell for
    unkeyed records is stored under an empty-list key.
    """

    def __init__(self, init: Value, snapshot: Optional[Value] = None):
        self.init = init
        self.cells: dict[bytes, tuple[Value, Value]] = {}
        if snapshot is not None:
            if not isinstance(snapshot, list):
                raise InvalidArgument("state snapshot must be a list of pairs")
            for entry in snapshot:
                k, v = entry
                key = None if k == [] else k
                self.cells[self._ck(key)] = (key, v)

    @staticmethod
    def _ck(key: Optional[Value]) -> bytes:
        return b"\x00" if key is None else b"\x01" + canon_bytes(key)

    def step(self, f: Callable, r: Record) -> Record:
        ck = self._ck(r.key)
        state = self.cells[ck][1] if ck in self.cells else self.init
        new_state, out = f(state, r)
        self.cells[ck] = (r.key, new_state)
        return out

    def dump(self) -> Value:
        entries = []
        for key, value in self.cells.values():
            entries.append(([] if key is None else key, value))
        entries.sort(key=lambda e: canon_bytes(e[0]))
        return entries


class Behavior:
    def __init__(
        self,
        plan: ExecutionPlan,
        actor: PlanActor,
        bound=None,
        initial_state: Optional[Value] = None,
    ):
        self.plan = plan
        self.actor = actor
        self.bound = bound
        self.in_chs = plan.in_channels(actor.actor_id)
        self.ports = plan.ports_of(actor.actor_id)
        self.groups = plan.out_groups(actor.actor_id)
        self.halted = False
        if initial_state is not None and self.snapshot_state() is None:
            raise InvalidArgument(
                f"{actor.actor_id} is stateless; it cannot be seeded with state"
            )
        if initial_state is not None:
            self.restore_state(initial_state)

    # -- overridables ------------------------------------------------------------

    def poll(self, heads: dict[str, object]) -> Optional[Firing]:
        raise NotImplementedError

    def fire(self, consumed: list[tuple[str, Envelope]]) -> FireResult:
        raise NotImplementedError

    def snapshot_state(self) -> Optional[Value]:
        return None

    def restore_state(self, value: Value) -> None:
        raise InvalidArgument(f"{self.actor.actor_id} holds no restorable state")

    # -- helpers -----------------------------------------------------------------

    def eos_result(self) -> FireResult:
        out = FireResult(halt=True)
        for g in self.groups:
            out.emissions.append(Emission(EOS, group=g))
        return out

    def wave_poll(self, heads: dict[str, object]) -> Optional[Firing]:
        """One token per input channel per firing; EOS only when unanimous."""
        hs = [heads[c.channel_id] for c in self.in_chs]
        if any(h is None for h in hs):
            return None
        if all(is_data(h) for h in hs):
            return Firing(tuple(c.channel_id for c in self.in_chs))
        if all(isinstance(h, EndOfStream) for h in hs):
            return Firing(tuple(c.channel_id for c in self.in_chs), "eos")
        raise GraphError(
            f"{self.actor.actor_id}: wave misalignment (data and end-of-stream "
            "heads in the same wave)"
        )

    def tuple_poll(self, heads: dict[str, object]) -> Optional[Firing]:
        """Records move one at a time: from-any takes any channel, from-all
        takes one record per port (any channel within the port)."""
        hs = [heads[c.channel_id] for c in self.in_chs]
        if hs and all(isinstance(h, EndOfStream) for h in hs):
            return Firing(tuple(c.channel_id for c in self.in_chs), "eos")
        if self.actor.consume_policy is ConsumePolicy.FROM_ANY:
            for c in self.in_chs:
                if is_data(heads[c.channel_id]):
                    return Firing((c.channel_id,))
            return None
        picks = []
        stuck = False
        for port in sorted(self.ports):
            pick = None
            for c in self.ports[port]:
                if is_data(heads[c.channel_id]):
                    pick = c.channel_id
                    break
            if pick is None:
                stuck = True
                # a port whose every channel ends can never complete a wave
                if all(
                    isinstance(heads[c.channel_id], EndOfStream)
                    for c in self.ports[port]
                ):
                    ended = tuple(
                        c.channel_id
                        for c in self.in_chs
                        if isinstance(heads[c.channel_id], EndOfStream)
                    )
                    return Firing(ended, "eos")
            else:
                picks.append(pick)
        if stuck:
            return None
        return Firing(tuple(picks)) if picks else None

    def emit_all_groups(self, token) -> list[Emission]:
        return [Emission(token, group=g) for g in self.groups]


# -- sources ---------------------------------------------------------------------


class SourceBehavior(Behavior):
    """Sources, injectors, and spouts: emit bound data wave by wave, then
    end the stream.  Spouts may pull from a generator instead."""

    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        self.cursor = 0
        self.generator = None
        if actor.spec.kind == "spout" and bound is None:
            self.generator = actor.spec.kernel
        if actor.spec.kind in ("source", "inject") and bound is None:
            name = actor.spec.params.get("input", actor.actor_id)
            raise InvalidArgument(f"no data bound to input {name!r}")

    def poll(self, heads):
        return None if self.halted else Firing((), "data")

    def fire(self, consumed):
        gran = self.actor.granularity
        if self.generator is not None:
            r = self.generator()
            if r is None:
                return self.eos_result()
            return FireResult(self.emit_all_groups(TupleToken(r)))
        data = self.bound
        if gran is Granularity.COLLECTION:
            out = FireResult(self.emit_all_groups(CollectionToken(Multiset(data))))
        elif not data:
            return self.eos_result()
        elif gran is Granularity.MICRO_BATCH:
            chunk = data[self.cursor]
            self.cursor += 1
            out = FireResult(self.emit_all_groups(MicroBatchToken(chunk)))
        else:
            r = data[self.cursor]
            self.cursor += 1
            out = FireResult(self.emit_all_groups(TupleToken(r)))
        if gran is Granularity.COLLECTION or self.cursor >= len(data):
            tail = self.eos_result()
            out.emissions.extend(tail.emissions)
            out.halt = True
        return out


# -- collection and micro-batch actors ----------------------------------------------


class WaveBehavior(Behavior):
    """Base for actors that consume one aligned token per channel per wave."""

    def poll(self, heads):
        if self.halted:
            return None
        return self.wave_poll(heads)

    def fire(self, consumed):
        if consumed and all(isinstance(e.token, EndOfStream) for _, e in consumed):
            return self.on_eos()
        return self.on_wave(consumed)

    def on_eos(self) -> FireResult:
        return self.eos_result()

    def on_wave(self, consumed) -> FireResult:
        raise NotImplementedError

    @staticmethod
    def merged(consumed: list[tuple[str, Envelope]]) -> list[Record]:
        """All wave records, ordered by arrival stamp."""
        out: list[Record] = []
        for _, env in sorted(consumed, key=lambda ce: ce[1].stamp):
            records, _, _, _ = _unwrap(env.token)
            out.extend(records)
        return out

    @staticmethod
    def wave_meta(consumed) -> tuple[Optional[int], Optional[int], Optional[int]]:
        """seq/tag/tag_seq shared by the wave; mixed waves are a plan bug."""
        seqs, tags, tag_seqs = set(), set(), set()
        for _, env in consumed:
            _, seq, tag, tag_seq = _unwrap(env.token)
            seqs.add(seq)
            tags.add(tag)
            tag_seqs.add(tag_seq)
        if len(seqs) > 1 or len(tags) > 1 or len(tag_seqs) > 1:
            raise GraphError("wave mixes tokens from different chunks or tags")
        return seqs.pop(), tags.pop(), tag_seqs.pop()


class ElementwiseWave(WaveBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        spec = actor.spec
        self.stages = spec.params["stages"] if spec.kind == "fused" else [spec]

    def on_wave(self, consumed):
        ((_, env),) = consumed
        records, seq, tag, tag_seq = _unwrap(env.token)
        out = apply_stages(self.stages, records)
        tok = _wrap(self.actor.granularity, out, seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))


class ShuffleWave(WaveBehavior):
    """groupByKey / reduceByKey / join replicas."""

    def on_wave(self, consumed):
        seq, tag, tag_seq = self.wave_meta(consumed)
        kind = self.actor.spec.kind
        if kind == "join":
            by_port = {0: [], 1: []}
            port_of = {c.channel_id: c.dst_port for c in self.in_chs}
            for cid, env in sorted(consumed, key=lambda ce: ce[1].stamp):
                records, _, _, _ = _unwrap(env.token)
                by_port[port_of[cid]].extend(records)
            out = eval_join(by_port[0], by_port[1])
        elif kind == "group_by_key":
            out = eval_group_by_key(self.merged(consumed))
        else:
            out = eval_reduce_by_key(self.merged(consumed), self.actor.spec.kernel)
        tok = _wrap(self.actor.granularity, out, seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))


class ReducePartialWave(WaveBehavior):
    def on_wave(self, consumed):
        ((_, env),) = consumed
        records, seq, tag, tag_seq = _unwrap(env.token)
        out: list[Record] = []
        if records:
            acc = records[0].payload
            f = self.actor.spec.kernel
            for r in records[1:]:
                acc = f(acc, r.payload)
            out = [Record(None, acc)]
        tok = _wrap(self.actor.granularity, out, seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))


class ReduceCombineWave(WaveBehavior):
    def on_wave(self, consumed):
        seq, tag, tag_seq = self.wave_meta(consumed)
        # channel order, not arrival order: partial k always folds at slot k
        by_channel = dict(consumed)
        vals = []
        for c in self.in_chs:
            records, _, _, _ = _unwrap(by_channel[c.channel_id].token)
            vals.extend(r.payload for r in records)
        if not vals:
            raise EmptyInput("reduce over an empty collection")
        f = self.actor.spec.kernel
        acc = vals[0]
        for v in vals[1:]:
            acc = f(acc, v)
        tok = _wrap(self.actor.granularity, [Record(None, acc)], seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))


class ScatterWave(WaveBehavior):
    """Splits each incoming batch across the replicas downstream: keyed
    records go by key hash, unkeyed ones rotate round-robin."""

    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        (self.split_group,) = self.groups
        self.rr = 0

    def on_wave(self, consumed):
        ((_, env),) = consumed
        records, seq, tag, tag_seq = _unwrap(env.token)
        q = len(self.split_group.channels)
        buckets: list[list[Record]] = [[] for _ in range(q)]
        for r in records:
            if r.key is not None:
                buckets[stable_hash(r.key) % q].append(r)
            else:
                buckets[self.rr % q].append(r)
                self.rr += 1
        out = FireResult()
        for i, cid in enumerate(self.split_group.channels):
            tok = _wrap(self.actor.granularity, buckets[i], seq, tag, tag_seq)
            out.emissions.append(Emission(tok, channel=cid))
        return out


class GatherWave(WaveBehavior):
    """Merges the wave from every replica into one token, in arrival order."""

    def on_wave(self, consumed):
        seq, tag, tag_seq = self.wave_meta(consumed)
        tok = _wrap(self.actor.granularity, self.merged(consumed), seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))


class StatefulChunkWave(WaveBehavior):
    """map_with_state at micro-batch granularity: keyed state carried
    across chunk waves in order."""

    def __init__(self, plan, actor, bound=None, initial_state=None):
        self.cells = StateCells(actor.spec.params["init"])
        super().__init__(plan, actor, bound, initial_state)

    def on_wave(self, consumed):
        ((_, env),) = consumed
        records, seq, tag, tag_seq = _unwrap(env.token)
        f = self.actor.spec.kernel
        out = [self.cells.step(f, r) for r in records]
        tok = _wrap(self.actor.granularity, out, seq, tag, tag_seq)
        return FireResult(self.emit_all_groups(tok))

    def snapshot_state(self):
        return self.cells.dump()

    def restore_state(self, value):
        self.cells = StateCells(self.actor.spec.params["init"], value)


class SinkWave(WaveBehavior):
    """Sinks and collectors accumulate canonical token forms in arrival order."""

    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        self.results: list = []

    def on_wave(self, consumed):
        for _, env in sorted(consumed, key=lambda ce: ce[1].stamp):
            self.results.append(env.token)
        return FireResult()


# -- tuple actors ---------------------------------------------------------------


class TupleBehavior(Behavior):
    def poll(self, heads):
        if self.halted:
            return None
        return self.tuple_poll(heads)

    def fire(self, consumed):
        if consumed and all(isinstance(e.token, EndOfStream) for _, e in consumed):
            return self.on_eos()
        return self.on_records(consumed)

    def on_eos(self) -> FireResult:
        return self.eos_result()

    def on_records(self, consumed) -> FireResult:
        raise NotImplementedError


class TupleElementwise(TupleBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        spec = actor.spec
        self.stages = spec.params["stages"] if spec.kind == "fused" else [spec]

    def on_records(self, consumed):
        ((_, env),) = consumed
        tok: TupleToken = env.token
        out = FireResult()
        for r in apply_stages(self.stages, [tok.record]):
            out.emissions.extend(
                self.emit_all_groups(TupleToken(r, tok.tag, tok.tag_seq))
            )
        return out


class TupleWindow(TupleBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        spec = actor.spec.params["spec"]
        self.size = spec.size
        self.slide = spec.slide
        self.pending: list[Value] = []
        super().__init__(plan, actor, bound, initial_state)

    def on_records(self, consumed):
        ((_, env),) = consumed
        tok: TupleToken = env.token
        self.pending.append(window_member_value(tok.record))
        out = FireResult()
        while len(self.pending) >= self.size:
            window = Record(None, list(self.pending[: self.size]))
            self.pending = self.pending[self.slide :]
            out.emissions.extend(
                self.emit_all_groups(TupleToken(window, tok.tag, tok.tag_seq))
            )
        return out

    def snapshot_state(self):
        return list(self.pending)

    def restore_state(self, value):
        if not isinstance(value, list):
            raise InvalidArgument("window state must be a list of member values")
        self.pending = list(value)


class TupleMapWithState(TupleBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        self.cells = StateCells(actor.spec.params["init"])
        super().__init__(plan, actor, bound, initial_state)

    def on_records(self, consumed):
        ((_, env),) = consumed
        tok: TupleToken = env.token
        out = self.cells.step(self.actor.spec.kernel, tok.record)
        return FireResult(self.emit_all_groups(TupleToken(out, tok.tag, tok.tag_seq)))

    def snapshot_state(self):
        return self.cells.dump()

    def restore_state(self, value):
        self.cells = StateCells(self.actor.spec.params["init"], value)


class BoltBehavior(TupleBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        seed = actor.spec.params.get("initial_state")
        self.state = BoltState(seed) if seed is not None else None
        super().__init__(plan, actor, bound, initial_state)
        self.src_name = {
            c.channel_id: (
                plan.actors[c.src].origin or c.src
            )
            for c in self.in_chs
        }

    def on_records(self, consumed):
        inputs = [
            (self.src_name[cid], env.token.record) for cid, env in consumed
        ]
        tag = consumed[0][1].token.tag
        tag_seq = consumed[0][1].token.tag_seq
        staged: list[tuple[Record, Optional[str]]] = []

        def emit(record: Record, to: Optional[str] = None) -> None:
            staged.append((record, to))

        self.actor.spec.kernel(inputs, emit, self.state)
        out = FireResult()
        for record, to in staged:
            tok = TupleToken(record, tag, tag_seq)
            if to is None:
                out.emissions.extend(self.emit_all_groups(tok))
                continue
            matched = [g for g in self.groups if g.edge_key == to]
            if not matched:
                raise InvalidArgument(
                    f"{self.actor.actor_id} has no successor named {to!r}"
                )
            out.emissions.extend(Emission(tok, group=g) for g in matched)
        return out

    def snapshot_state(self):
        return self.state.dump() if self.state is not None else None

    def restore_state(self, value):
        self.state = BoltState(value)


class TupleForward(TupleBehavior):
    """Tuple-granularity gathers: merge replica streams by arrival."""

    def on_records(self, consumed):
        ((_, env),) = consumed
        return FireResult(self.emit_all_groups(env.token))


class TupleSink(TupleBehavior):
    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        self.results: list = []

    def on_records(self, consumed):
        for _, env in consumed:
            self.results.append(env.token)
        return FireResult()


# -- iteration drivers --------------------------------------------------------------


class DriverBehavior(Behavior):
    """Runs the loop: while the collection is not final and the budget
    holds, send it through the body once more.

    The barrier flavor keeps a single token in flight; the tagged flavor
    tags every fresh token and lets them iterate independently.
    """

    def __init__(self, plan, actor, bound=None, initial_state=None):
        super().__init__(plan, actor, bound, initial_state)
        self.tagged = plan.iteration.value == "tagged"
        self.terminate = actor.spec.params["terminate"]
        self.limit = actor.spec.params["max_iterations"]
        loops = {c.channel_id for c in plan.out_channels(actor.actor_id) if c.loop}
        body = [g for g in self.groups if set(g.channels) & loops]
        if len(body) != 1:
            raise GraphError(f"{actor.actor_id}: expected one feedback output")
        self.body_group = body[0]
        self.down_groups = [g for g in self.groups if g is not self.body_group]
        ports = self.ports
        (self.fresh_ch,) = [c.channel_id for c in ports.get(0, [])]
        (self.back_ch,) = [c.channel_id for c in ports.get(1, [])]
        self.active: dict[int, dict] = {}
        self.next_tag = 0
        self.next_seq = 0
        self.held: dict[int, object] = {}
        self.shutdown = False

    def poll(self, heads):
        if self.halted:
            return None
        back = heads.get(self.back_ch)
        if is_data(back):
            return Firing((self.back_ch,), "feedback")
        fresh = heads.get(self.fresh_ch)
        if is_data(fresh) and (self.tagged or not self.active):
            return Firing((self.fresh_ch,), "fresh")
        if (
            isinstance(fresh, EndOfStream)
            and not self.active
            and not self.shutdown
        ):
            return Firing((self.fresh_ch,), "shutdown")
        if isinstance(back, EndOfStream) and self.shutdown:
            return Firing((self.back_ch,), "finish")
        return None

    def fire(self, consumed):
        ((cid, env),) = consumed
        tok = env.token
        if isinstance(tok, EndOfStream):
            if cid == self.fresh_ch:
                self.shutdown = True
                return FireResult([Emission(EOS, group=self.body_group)])
            out = FireResult(halt=True)
            for g in self.down_groups:
                out.emissions.append(Emission(EOS, group=g))
            return out
        if cid == self.fresh_ch:
            return self.start(tok)
        return self.feedback(tok)

    def start(self, tok) -> FireResult:
        records, seq, _, _ = _unwrap(tok)
        tag = self.next_tag
        self.next_tag += 1
        if self.terminate(Multiset(records)) or self.limit < 1:
            return self.complete(tag, records, seq)
        self.active[tag] = {"count": 0, "seq": seq}
        out = FireResult(
            [Emission(CollectionToken(Multiset(records), tag, 0), group=self.body_group)]
        )
        out.events.append({"kind": "superstep_begin", "tag": tag, "superstep": 0})
        return out

    def feedback(self, tok) -> FireResult:
        records, _, tag, _ = _unwrap(tok)
        entry = self.active[tag]
        n = entry["count"] + 1
        done_event = {"kind": "superstep_end", "tag": tag, "superstep": n - 1}
        if self.terminate(Multiset(records)) or n >= self.limit:
            result = self.complete(tag, records, entry["seq"])
            result.events.insert(0, done_event)
            return result
        entry["count"] = n
        out = FireResult(
            [Emission(CollectionToken(Multiset(records), tag, n), group=self.body_group)]
        )
        out.events.append(done_event)
        out.events.append({"kind": "superstep_begin", "tag": tag, "superstep": n})
        return out

    def complete(self, tag: int, records: list[Record], seq) -> FireResult:
        self.active.pop(tag, None)
        out = FireResult()
        if self.actor.granularity is Granularity.MICRO_BATCH:
            # completion order varies under tags; release chunks in seq order
            self.held[seq] = MicroBatchToken(StreamChunk(seq, Multiset(records)))
            while self.next_seq in self.held:
                tok = self.held.pop(self.next_seq)
                self.next_seq += 1
                for g in self.down_groups:
                    out.emissions.append(Emission(tok, group=g))
            return out
        tok = CollectionToken(Multiset(records))
        for g in self.down_groups:
            out.emissions.append(Emission(tok, group=g))
        return out


# -- construction -------------------------------------------------------------------


def make_behavior(
    plan: ExecutionPlan,
    actor: PlanActor,
    inputs: Optional[dict] = None,
    initial_state: Optional[Value] = None,
) -> Behavior:
    inputs = inputs or {}
    kind = actor.spec.kind
    gran = actor.granularity
    bound = None
    if kind in ("source", "inject", "spout"):
        bound = inputs.get(actor.spec.params.get("input"))
        return SourceBehavior(plan, actor, bound, initial_state)
    if kind == "scatter":
        return ScatterWave(plan, actor, None, initial_state)
    if kind == "gather":
        if gran is Granularity.TUPLE:
            return TupleForward(plan, actor, None, initial_state)
        return GatherWave(plan, actor, None, initial_state)
    if kind in ("sink", "collect"):
        if gran is Granularity.TUPLE:
            return TupleSink(plan, actor, None, initial_state)
        return SinkWave(plan, actor, None, initial_state)
    if kind == "iterate":
        return DriverBehavior(plan, actor, None, initial_state)
    if gran is Granularity.TUPLE:
        if kind in ("map", "flat_map", "filter", "fused"):
            return TupleElementwise(plan, actor, None, initial_state)
        if kind == "window":
            return TupleWindow(plan, actor, None, initial_state)
        if kind == "map_with_state":
            return TupleMapWithState(plan, actor, None, initial_state)
        if kind == "bolt":
            return BoltBehavior(plan, actor, None, initial_state)
        raise GraphError(f"no tuple behavior for actor kind {kind!r}")
    if kind in ("map", "flat_map", "filter", "fused"):
        return ElementwiseWave(plan, actor, None, initial_state)
    if kind in ("group_by_key", "reduce_by_key", "join"):
        return ShuffleWave(plan, actor, None, initial_state)
    if kind == "reduce_partial":
        return ReducePartialWave(plan, actor, None, initial_state)
    if kind == "reduce_combine":
        return ReduceCombineWave(plan, actor, None, initial_state)
    if kind == "map_with_state":
        return StatefulChunkWave(plan, actor, None, initial_state)
    raise GraphError(f"no behavior for actor kind {kind!r}")


# -- routing ------------------------------------------------------------------------


def route_emission(
    plan: ExecutionPlan, em: Emission, rr: dict[str, int]
) -> list[tuple[str, object]]:
    """Resolve an emission to (channel_id, token) deliveries.

    `rr` holds the per-group rotation counters and belongs to the engine,
    so rotation survives across firings.
    """
    if em.channel is not None:
        return [(em.channel, em.token)]
    g = em.group
    if g is None:
        raise GraphError("emission names neither a group nor a channel")
    if isinstance(em.token, EndOfStream):
        return [(cid, em.token) for cid in g.channels]
    d = g.discipline
    if d is Discipline.FORWARD:
        return [(g.channels[0], em.token)]
    if d is Discipline.ROUND_ROBIN:
        i = rr.get(g.group_id, 0)
        rr[g.group_id] = i + 1
        return [(g.channels[i % len(g.channels)], em.token)]
    if d is Discipline.HASH:
        q = len(g.channels)
        tok = em.token
        if isinstance(tok, TupleToken):
            key = tok.record.key
            h = stable_hash(key if key is not None else tok.record.payload)
            return [(g.channels[h % q], tok)]
        records, seq, tag, tag_seq = _unwrap(tok)
        buckets: list[list[Record]] = [[] for _ in range(q)]
        for r in records:
            if r.key is None:
                raise KeyedInputRequired(
                    "hash partitioning needs keyed records"
                )
            buckets[stable_hash(r.key) % q].append(r)
        gran = plan.actors[g.src].granularity
        return [
            (cid, _wrap(gran, buckets[i], seq, tag, tag_seq))
            for i, cid in enumerate(g.channels)
        ]
    raise GraphError(f"group {g.group_id} routed by the behavior, not the engine")
