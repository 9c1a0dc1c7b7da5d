"""Process-based engine: no master, no scheduler.

Every actor is pinned to one executor thread.  An executor loops over its
actors, and whenever one of them can fire it pops the inputs, runs the
behavior, and routes the emissions itself.  Coordination is limited to
per-channel locks plus one engine lock that guards the idle flags, so
execution order emerges from the threads instead of a scheduling policy.

Staged plans are refused: without a master there is nobody to hold a
barrier, which is the point of this engine.
"""

from __future__ import annotations

import threading
import time
from typing import Optional

from ..data import token_kind
from ..errors import InvalidMode, RunAborted, StallError
from ..plan import ExecutionPlan, PlanMode
from .behaviors import route_emission
from .channels import Channel, Counter, Envelope
from .common import RunConfig, RunResult, build_behaviors, collect_outputs, task_delay_s
from .tracing import TraceCollector


class _Engine:
    def __init__(self, plan: ExecutionPlan, inputs, config: RunConfig):
        self.plan = plan
        self.config = config
        self.behaviors = build_behaviors(plan, inputs, config)
        self.channels = {
            cid: Channel(cid, config.channel_capacity) for cid in plan.channels
        }
        self.trace = TraceCollector(config.trace)
        self.stamps = Counter()
        self.tasks = Counter()
        self.rr: dict[str, int] = {}
        self.rr_lock = threading.Lock()
        self.lock = threading.Lock()  # idle flags, stop flag, firing-start gate
        self.idle = [False] * config.workers
        self.stop = False
        self.error: Optional[Exception] = None
        self.last_progress = time.monotonic()
        self.out_chs = {
            aid: [c.channel_id for c in plan.out_channels(aid)] for aid in plan.actors
        }
        self.no_input = {aid for aid, beh in self.behaviors.items() if not beh.in_chs}
        order = list(plan.actors)
        self.owned = [
            [aid for j, aid in enumerate(order) if j % config.workers == i]
            for i in range(config.workers)
        ]

    # -- helpers -----------------------------------------------------------------

    def heads_of(self, beh) -> dict[str, object]:
        return {c.channel_id: self.channels[c.channel_id].peek() for c in beh.in_chs}

    def gated(self, actor_id: str) -> bool:
        return any(self.channels[cid].full() for cid in self.out_chs[actor_id])

    def occupancy(self) -> dict[str, int]:
        return {cid: len(ch) for cid, ch in self.channels.items() if len(ch)}

    def fail(self, exc: Exception) -> None:
        with self.lock:
            if self.error is None:
                self.error = exc
            self.stop = True

    # -- one firing, end to end ----------------------------------------------------

    def fire_inline(self, exec_name: str, actor_id: str, firing) -> None:
        beh = self.behaviors[actor_id]
        task_id = self.tasks.next()
        consumed = []
        for cid in firing.pops:
            env = self.channels[cid].pop()
            consumed.append((cid, env))
            self.trace.emit(
                "receive",
                actor=actor_id,
                channel=cid,
                worker=exec_name,
                token=env.uid,
                tkind=token_kind(env.token),
            )
        self.trace.emit(
            "task_start", actor=actor_id, worker=exec_name, task=f"t{task_id}"
        )
        pause = task_delay_s(self.config.seed, task_id, self.config.delay_ms)
        if pause:
            time.sleep(pause)
        try:
            result = beh.fire(consumed)
        except BaseException as exc:
            self.trace.emit(
                "task_end", actor=actor_id, worker=exec_name, task=f"t{task_id}"
            )
            self.fail(RunAborted(task_id, actor_id, exc))
            return
        self.trace.emit(
            "task_end", actor=actor_id, worker=exec_name, task=f"t{task_id}"
        )
        for ev in result.events:
            self.trace.emit(
                ev["kind"],
                actor=actor_id,
                worker=exec_name,
                task=f"t{task_id}",
                tag=ev.get("tag"),
                superstep=ev.get("superstep"),
            )
        for em in result.emissions:
            with self.rr_lock:
                deliveries = route_emission(self.plan, em, self.rr)
            for cid, tok in deliveries:
                uid = self.stamps.next()
                self.channels[cid].put(Envelope(uid, uid, tok))
                self.trace.emit(
                    "send",
                    actor=actor_id,
                    channel=cid,
                    token=uid,
                    tkind=token_kind(tok),
                )
        if result.halt:
            beh.halted = True

    # -- termination ---------------------------------------------------------------

    def check_quiescent(self) -> None:
        """Runs under the engine lock while every executor is idle, so the
        network is frozen: decide between done, deadlocked, and waiting."""
        fireable = False
        gated_only = False
        for aid, beh in self.behaviors.items():
            if beh.halted:
                continue
            try:
                firing = beh.poll(self.heads_of(beh))
            except Exception as exc:
                self.error = self.error or exc
                self.stop = True
                return
            if firing is None:
                continue
            if self.gated(aid):
                gated_only = True
            else:
                fireable = True
                break
        if fireable:
            return  # an owner will pick it up on its next pass
        if gated_only:
            self.error = self.error or StallError(
                "every ready actor is blocked on a full channel", self.occupancy()
            )
            self.stop = True
            return
        if all(self.behaviors[aid].halted for aid in self.no_input):
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
            self.stop = True
            return
        self.error = self.error or StallError(
            "no actor can make progress", self.occupancy()
        )
        self.stop = True

    # -- executor loop ---------------------------------------------------------------

    def executor(self, i: int) -> None:
        name = f"x{i}"
        watchdog_s = self.config.watchdog_ms / 1000.0
        while True:
            fired = False
            for aid in self.owned[i]:
                beh = self.behaviors[aid]
                if beh.halted:
                    continue
                try:
                    firing = beh.poll(self.heads_of(beh))
                except Exception as exc:
                    self.fail(exc)
                    return
                if firing is None or self.gated(aid):
                    continue
                with self.lock:
                    if self.stop:
                        return
                    self.idle[i] = False
                    self.last_progress = time.monotonic()
                self.fire_inline(name, aid, firing)
                fired = True
            if self.stop:
                return
            if fired:
                continue
            with self.lock:
                self.idle[i] = True
                if i == 0:
                    if all(self.idle):
                        self.check_quiescent()
                    elif time.monotonic() - self.last_progress > watchdog_s:
                        self.error = self.error or StallError(
                            "tasks stopped completing before the watchdog "
                            "deadline",
                            self.occupancy(),
                        )
                        self.stop = True
                if self.stop:
                    return
            time.sleep(0.0005)


def run_process_based(
    plan: ExecutionPlan, inputs=None, config: Optional[RunConfig] = None
) -> RunResult:
    """Execute a plan by handing each actor to a fixed executor thread."""
    if plan.mode is PlanMode.BSP:
        raise InvalidMode(
            "staged plans need a coordinator; use the scheduling engine"
        )
    config = config or RunConfig()
    eng = _Engine(plan, inputs, config)
    t0 = time.monotonic()
    threads = [
        threading.Thread(target=eng.executor, args=(i,), daemon=True)
        for i in range(config.workers)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=config.watchdog_ms / 1000.0 + 30.0)
    if eng.error is not None:
        raise eng.error
    sinks, states = collect_outputs(plan, eng.behaviors)
    stats = {
        "engine": "process",
        "mode": plan.mode.value,
        "workers": config.workers,
        "tasks": eng.tasks.value(),
        "wall_ms": round((time.monotonic() - t0) * 1000.0, 3),
    }
    return RunResult(sinks, states, eng.trace.events(), stats)
