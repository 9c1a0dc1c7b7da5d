"""Plumbing shared by both execution engines."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..data import token_to_json
from ..errors import InvalidArgument
from ..plan import ExecutionPlan
from ..values import Value, canon_json
from .behaviors import Behavior, FireResult, make_behavior
from .channels import Envelope
from .tracing import TraceEvent


class Dispatch(Enum):
    ROUND_ROBIN = "round_robin"  # task i runs on worker i mod n
    ON_DEMAND = "on_demand"      # any idle worker takes the next task


@dataclass
class RunConfig:
    workers: int = 2
    dispatch: Dispatch = Dispatch.ROUND_ROBIN
    channel_capacity: int = 1024
    watchdog_ms: int = 10_000
    seed: int = 0
    delay_ms: int = 0  # upper bound for injected per-task sleeps
    initial_states: Optional[dict[str, Value]] = None
    trace: bool = True


@dataclass
class RunResult:
    sinks: dict[str, list[str]]  # output name -> canonical token lines
    states: dict[str, Value]  # actor id -> final state snapshot
    trace: list[TraceEvent] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def build_behaviors(
    plan: ExecutionPlan,
    inputs: Optional[dict] = None,
    config: Optional[RunConfig] = None,
) -> dict[str, Behavior]:
    plan.validate()
    seeds = dict(config.initial_states or {}) if config else {}
    unknown = set(seeds) - set(plan.actors)
    if unknown:
        raise InvalidArgument(f"initial state for unknown actors: {sorted(unknown)}")
    return {
        aid: make_behavior(plan, actor, inputs, seeds.get(aid))
        for aid, actor in plan.actors.items()
    }


def collect_outputs(
    plan: ExecutionPlan, behaviors: dict[str, Behavior]
) -> tuple[dict[str, list[str]], dict[str, Value]]:
    sinks: dict[str, list[str]] = {}
    for name, aid in plan.output_bindings.items():
        results = getattr(behaviors[aid], "results", [])
        sinks[name] = [canon_json(token_to_json(t)) for t in results]
    states: dict[str, Value] = {}
    for aid, beh in behaviors.items():
        snap = beh.snapshot_state()
        if snap is not None:
            states[aid] = snap
    return sinks, states


def task_delay_s(seed: int, task_id: int, delay_ms: int) -> float:
    """Deterministic per-task sleep used to shake up schedules."""
    if delay_ms <= 0:
        return 0.0
    rng = random.Random((seed << 24) ^ task_id)
    return rng.uniform(0.0, delay_ms) / 1000.0


def fire_actor(
    plan: ExecutionPlan,
    actor_id: str,
    consumed: list[tuple[str, object]],
    inputs: Optional[dict] = None,
    initial_state: Optional[Value] = None,
) -> tuple[Behavior, FireResult]:
    """Run a single firing of one actor in isolation.

    `consumed` pairs channel ids with bare tokens; envelopes are stamped
    in list order.  Meant for tests and debugging, not for execution.
    """
    beh = make_behavior(plan, plan.actors[actor_id], inputs, initial_state)
    envs = [
        (cid, Envelope(uid=i, stamp=i, token=tok))
        for i, (cid, tok) in enumerate(consumed)
    ]
    result = beh.fire(envs)
    if result.halt:
        beh.halted = True
    return beh, result
