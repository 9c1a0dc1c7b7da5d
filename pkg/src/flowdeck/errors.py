"""Exception taxonomy shared across the package."""

from __future__ import annotations


class FlowdeckError(Exception):
    """Base class for all errors raised by flowdeck."""


class InvalidArgument(FlowdeckError):
    """A caller-supplied argument is out of range or malformed."""


class InvalidMode(FlowdeckError):
    """Operation is not defined for the program or plan mode at hand."""


class UnsupportedInStream(FlowdeckError):
    """Program contains an operator that has no streaming translation."""


class EmptyInput(FlowdeckError):
    """A fold over an empty collection; no identity element is assumed."""


class KeyedInputRequired(FlowdeckError):
    """A key-based operator received unkeyed records."""


class GraphError(FlowdeckError):
    """Graph or plan construction violated a structural rule."""


class RunAborted(FlowdeckError):
    """A kernel raised during execution; the run stopped.

    Carries the failing task id and actor so the trace can be correlated.
    """

    def __init__(self, task_id: int, actor: str, cause: BaseException):
        super().__init__(f"task {task_id} on actor {actor!r} failed: {cause!r}")
        self.task_id = task_id
        self.actor = actor
        self.cause = cause


class StallError(FlowdeckError):
    """No actor made progress before the watchdog deadline expired."""

    def __init__(self, message: str, occupancy: dict[str, int] | None = None):
        super().__init__(message)
        self.occupancy = occupancy or {}
