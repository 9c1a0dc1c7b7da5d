"""Execution runtime: channels, behaviors, traces, and the two engines."""

from .behaviors import make_behavior, route_emission
from .channels import Channel, Counter, Envelope
from .common import Dispatch, RunConfig, RunResult, fire_actor
from .process import run_process_based
from .scheduled import run_scheduled
from .tracing import KINDS, TraceCollector, TraceEvent, trace_from_jsonl, trace_to_jsonl

__all__ = [
    "Channel",
    "Counter",
    "Dispatch",
    "Envelope",
    "KINDS",
    "RunConfig",
    "RunResult",
    "TraceCollector",
    "TraceEvent",
    "fire_actor",
    "make_behavior",
    "route_emission",
    "run_process_based",
    "run_scheduled",
    "trace_from_jsonl",
    "trace_to_jsonl",
]
