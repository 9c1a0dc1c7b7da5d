"""Scheduling-based engine: a master thread routes every token and hands
firings to a pool of workers that only compute.

The master is the sole thread that touches channels, so channel state
needs no coordination beyond the per-channel lock (workers still read
envelopes the master popped for them).  Workers pull tasks from their
queue, run the behavior's `fire`, and push the result back.

Plans in pipelined mode run dataflow-style: any actor whose inputs are
ready may fire.  Plans in staged mode run as rounds of supersteps: the
master walks the stages in order inside every round and lets each stage
drain before the next one starts, with barrier events marking the edges.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass
from typing import Optional

from ..data import token_kind
from ..errors import RunAborted, StallError
from ..plan import ExecutionPlan, PlanMode
from .behaviors import Behavior, route_emission
from .channels import Channel, Counter, Envelope
from .common import (
    Dispatch,
    RunConfig,
    RunResult,
    build_behaviors,
    collect_outputs,
    task_delay_s,
)
from .tracing import TraceCollector


@dataclass
class _Task:
    task_id: int
    actor: str
    consumed: list[tuple[str, Envelope]]
    phase: str
    stage: Optional[int] = None
    superstep: Optional[int] = None


@dataclass
class _Done:
    task: _Task
    result: object
    error: Optional[BaseException]
    worker: str


class _Master:
    def __init__(self, plan: ExecutionPlan, inputs, config: RunConfig):
        self.plan = plan
        self.config = config
        self.behaviors = build_behaviors(plan, inputs, config)
        self.channels = {
            cid: Channel(cid, config.channel_capacity) for cid in plan.channels
        }
        self.trace = TraceCollector(config.trace)
        self.stamps = Counter()
        self.rr: dict[str, int] = {}
        self.in_flight: dict[str, _Task] = {}
        self.task_seq = 0
        self.tasks_run = 0
        self.out_chs = {
            aid: [c.channel_id for c in plan.out_channels(aid)] for aid in plan.actors
        }
        self.no_input = {
            aid for aid, beh in self.behaviors.items() if not beh.in_chs
        }
        self.done_q: "queue.Queue[_Done]" = queue.Queue()
        self.queues: list["queue.Queue[Optional[_Task]]"] = [
            queue.Queue() for _ in range(config.workers)
        ]
        self.shared_q: "queue.Queue[Optional[_Task]]" = queue.Queue()
        self.threads: list[threading.Thread] = []
        self.failure: Optional[_Done] = None

    # -- worker side ---------------------------------------------------------------

    def _worker(self, wi: int) -> None:
        name = f"w{wi}"
        q = (
            self.queues[wi]
            if self.config.dispatch is Dispatch.ROUND_ROBIN
            else self.shared_q
        )
        while True:
            task = q.get()
            if task is None:
                return
            self.trace.emit(
                "task_start",
                actor=task.actor,
                worker=name,
                task=f"t{task.task_id}",
                stage=task.stage,
                superstep=task.superstep,
            )
            pause = task_delay_s(self.config.seed, task.task_id, self.config.delay_ms)
            if pause:
                time.sleep(pause)
            beh = self.behaviors[task.actor]
            try:
                result, error = beh.fire(task.consumed), None
            except BaseException as exc:
                result, error = None, exc
            self.trace.emit(
                "task_end",
                actor=task.actor,
                worker=name,
                task=f"t{task.task_id}",
                stage=task.stage,
                superstep=task.superstep,
            )
            self.done_q.put(_Done(task, result, error, name))

    def start_workers(self) -> None:
        for wi in range(self.config.workers):
            t = threading.Thread(target=self._worker, args=(wi,), daemon=True)
            t.start()
            self.threads.append(t)

    def stop_workers(self) -> None:
        for wi in range(self.config.workers):
            if self.config.dispatch is Dispatch.ROUND_ROBIN:
                self.queues[wi].put(None)
            else:
                self.shared_q.put(None)
        for t in self.threads:
            t.join(timeout=5.0)

    # -- master side ---------------------------------------------------------------

    def heads_of(self, beh: Behavior) -> dict[str, object]:
        return {c.channel_id: self.channels[c.channel_id].peek() for c in beh.in_chs}

    def gated(self, actor_id: str) -> bool:
        return any(self.channels[cid].full() for cid in self.out_chs[actor_id])

    def dispatch(self, actor_id: str, firing, stage=None, superstep=None) -> None:
        consumed = []
        for cid in firing.pops:
            env = self.channels[cid].pop()
            consumed.append((cid, env))
            self.trace.emit(
                "receive",
                actor=actor_id,
                channel=cid,
                token=env.uid,
                tkind=token_kind(env.token),
                stage=stage,
                superstep=superstep,
            )
        task = _Task(self.task_seq, actor_id, consumed, firing.phase, stage, superstep)
        self.task_seq += 1
        self.tasks_run += 1
        self.in_flight[actor_id] = task
        if self.config.dispatch is Dispatch.ROUND_ROBIN:
            self.queues[task.task_id % self.config.workers].put(task)
        else:
            self.shared_q.put(task)

    def complete(self, done: _Done) -> None:
        task = done.task
        del self.in_flight[task.actor]
        if done.error is not None:
            self.failure = done
            raise RunAborted(task.task_id, task.actor, done.error)
        for ev in done.result.events:
            self.trace.emit(
                ev["kind"],
                actor=task.actor,
                worker=done.worker,
                task=f"t{task.task_id}",
                tag=ev.get("tag"),
                superstep=ev.get("superstep"),
                stage=task.stage,
            )
        for em in done.result.emissions:
            for cid, tok in route_emission(self.plan, em, self.rr):
                uid = self.stamps.next()
                self.channels[cid].put(Envelope(uid, uid, tok))
                self.trace.emit(
                    "send",
                    actor=task.actor,
                    channel=cid,
                    token=uid,
                    tkind=token_kind(tok),
                    stage=task.stage,
                    superstep=task.superstep,
                )
        if done.result.halt:
            self.behaviors[task.actor].halted = True

    def drain_done(self, block: bool) -> bool:
        got = False
        while True:
            try:
                if block and not got:
                    item = self.done_q.get(timeout=0.02)
                else:
                    item = self.done_q.get_nowait()
            except queue.Empty:
                return got
            self.complete(item)
            got = True

    def all_halted(self) -> bool:
        return all(beh.halted for beh in self.behaviors.values())

    def occupancy(self) -> dict[str, int]:
        return {cid: len(ch) for cid, ch in self.channels.items() if len(ch)}

    def sources_halted(self) -> bool:
        return all(self.behaviors[aid].halted for aid in self.no_input)

    def finalize_quiescent(self) -> None:
        """Nothing can fire and nothing will arrive: stop the leftovers.

        Feedback edges never carry an end-of-stream marker, so cyclic
        plans end here; any tokens still queued are acknowledged so the
        send/receive ledger stays balanced.
        """
        for beh in self.behaviors.values():
            beh.halted = True
        for cid, ch in self.channels.items():
            for env in ch.drain():
                self.trace.emit(
                    "receive",
                    actor=self.plan.channels[cid].dst,
                    channel=cid,
                    token=env.uid,
                    tkind=token_kind(env.token),
                )

    # -- pipelined loop --------------------------------------------------------------

    def run_pipelined(self) -> None:
        watchdog_s = self.config.watchdog_ms / 1000.0
        last_progress = time.monotonic()
        while not self.all_halted():
            progress = False
            gated = False
            for aid, beh in self.behaviors.items():
                if beh.halted or aid in self.in_flight:
                    continue
                firing = beh.poll(self.heads_of(beh))
                if firing is None:
                    continue
                if self.gated(aid):
                    gated = True
                    continue
                self.dispatch(aid, firing)
                progress = True
            if self.drain_done(block=not progress and bool(self.in_flight)):
                progress = True
            if progress:
                last_progress = time.monotonic()
                continue
            if self.in_flight:
                if time.monotonic() - last_progress > watchdog_s:
                    raise StallError(
                        "tasks stopped completing before the watchdog deadline",
                        self.occupancy(),
                    )
                continue
            if gated:
                raise StallError(
                    "every ready actor is blocked on a full channel",
                    self.occupancy(),
                )
            if self.sources_halted():
                self.finalize_quiescent()
                return
            raise StallError("no actor can make progress", self.occupancy())

    # -- staged loop -----------------------------------------------------------------

    def run_staged(self) -> int:
        watchdog_s = self.config.watchdog_ms / 1000.0
        rounds = 0
        while not self.all_halted():
            fired_this_round: set[str] = set()
            round_tasks = 0
            for stage in range(self.plan.stages):
                self.trace.emit("barrier_enter", stage=stage, superstep=rounds)
                members = [
                    aid
                    for aid, a in self.plan.actors.items()
                    if a.stage == stage and not self.behaviors[aid].halted
                ]
                last_progress = time.monotonic()
                while True:
                    progress = False
                    for aid in members:
                        beh = self.behaviors[aid]
                        if beh.halted or aid in self.in_flight:
                            continue
                        if aid in self.no_input and aid in fired_this_round:
                            continue
                        firing = beh.poll(self.heads_of(beh))
                        if firing is None:
                            continue
                        if aid in self.no_input:
                            fired_this_round.add(aid)
                        self.dispatch(aid, firing, stage=stage, superstep=rounds)
                        progress = True
                        round_tasks += 1
                    if self.drain_done(block=not progress and bool(self.in_flight)):
                        progress = True
                    if progress:
                        last_progress = time.monotonic()
                        continue
                    if self.in_flight:
                        if time.monotonic() - last_progress > watchdog_s:
                            raise StallError(
                                "tasks stopped completing before the "
                                "watchdog deadline",
                                self.occupancy(),
                            )
                        continue
                    break
                self.trace.emit("barrier_exit", stage=stage, superstep=rounds)
            if round_tasks == 0:
                if self.sources_halted():
                    self.finalize_quiescent()
                    return rounds
                raise StallError(
                    "a full round of stages made no progress", self.occupancy()
                )
            rounds += 1
        return rounds


def run_scheduled(
    plan: ExecutionPlan, inputs=None, config: Optional[RunConfig] = None
) -> RunResult:
    """Execute a plan under the master and worker-pool engine."""
    config = config or RunConfig()
    master = _Master(plan, inputs, config)
    t0 = time.monotonic()
    master.start_workers()
    rounds = 0
    try:
        if plan.mode is PlanMode.BSP:
            rounds = master.run_staged()
        else:
            master.run_pipelined()
    finally:
        master.stop_workers()
    sinks, states = collect_outputs(plan, master.behaviors)
    stats = {
        "engine": "scheduled",
        "mode": plan.mode.value,
        "workers": config.workers,
        "dispatch": config.dispatch.value,
        "tasks": master.tasks_run,
        "rounds": rounds,
        "wall_ms": round((time.monotonic() - t0) * 1000.0, 3),
    }
    return RunResult(sinks, states, master.trace.events(), stats)
