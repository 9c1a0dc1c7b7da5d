"""Declarative program layer: a DAG of collection operators.

A LogicalProgram is built incrementally; every operator names already-added
upstream operators, so the graph is acyclic by construction.  External data
enters either through an explicit Source operator or by binding a named
input straight onto an operator's free port (InputRef).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .data import WindowSpec
from .errors import InvalidArgument, InvalidMode, UnsupportedInStream
from .kernels import Kernel


class OpKind(Enum):
    SOURCE = "source"
    MAP = "map"
    FLAT_MAP = "flat_map"
    FILTER = "filter"
    GROUP_BY_KEY = "group_by_key"
    REDUCE_BY_KEY = "reduce_by_key"
    REDUCE = "reduce"
    JOIN = "join"
    MAP_WITH_STATE = "map_with_state"
    WINDOW = "window"
    ITERATE = "iterate"
    SINK = "sink"


class Mode(Enum):
    BATCH = "batch"
    MICRO_BATCH_STREAM = "microbatch"
    TUPLE_STREAM = "tuple"

    @property
    def is_stream(self) -> bool:
        return self is not Mode.BATCH


# operator kinds that carry exactly one kernel
KERNEL_BEARING = {
    OpKind.MAP: "map",
    OpKind.FLAT_MAP: "flat_map",
    OpKind.FILTER: "filter",
    OpKind.REDUCE_BY_KEY: "fold",
    OpKind.REDUCE: "fold",
    OpKind.MAP_WITH_STATE: "stateful",
}

# keyed shuffles; batch/micro-batch collections only
SHUFFLE_KINDS = {OpKind.GROUP_BY_KEY, OpKind.REDUCE_BY_KEY, OpKind.JOIN}

ELEMENTWISE_KINDS = {OpKind.MAP, OpKind.FLAT_MAP, OpKind.FILTER}


@dataclass(frozen=True)
class InputRef:
    """A named external input bound directly to an operator port."""

    name: str


@dataclass
class LogicalOp:
    op_id: str
    kind: OpKind
    upstream: tuple[Union[str, InputRef], ...]
    kernel: Optional[Kernel] = None
    # kind-specific extras: input_name, window spec, iterate body, init state
    params: dict = field(default_factory=dict)


class LogicalProgram:
    def __init__(self, mode: Mode = Mode.BATCH, name: str = "program"):
        self.mode = mode
        self.name = name
        self.ops: dict[str, LogicalOp] = {}
        self.inputs: dict[str, str] = {}  # input name -> consuming op id
        self.outputs: dict[str, str] = {}  # output name -> producing op id
        self._counter = 0

    # -- helpers -----------------------------------------------------------

    def _new_id(self, kind: OpKind) -> str:
        self._counter += 1
        return f"op{self._counter}_{kind.value}"

    def _check_upstream(self, ref: Union[str, InputRef]) -> None:
        if isinstance(ref, InputRef):
            if ref.name not in self.inputs:
                raise InvalidArgument(f"unknown input binding {ref.name!r}")
            return
        if ref not in self.ops:
            raise InvalidArgument(f"unknown upstream op {ref!r}")
        if self.ops[ref].kind is OpKind.SINK:
            raise InvalidArgument("cannot consume from a sink")

    def _add(
        self,
        kind: OpKind,
        upstream: tuple[Union[str, InputRef], ...],
        kernel: Optional[Kernel] = None,
        **params,
    ) -> str:
        for ref in upstream:
            self._check_upstream(ref)
        expected = KERNEL_BEARING.get(kind)
        if expected is None:
            if kernel is not None:
                raise InvalidArgument(f"{kind.value} does not take a kernel")
        else:
            if kernel is None:
                raise InvalidArgument(f"{kind.value} requires a kernel")
            if kernel.kind != expected:
                raise InvalidArgument(
                    f"{kind.value} needs a {expected!r} kernel, got {kernel.kind!r}"
                )
        op_id = self._new_id(kind)
        self.ops[op_id] = LogicalOp(op_id, kind, tuple(upstream), kernel, params)
        return op_id

    # -- construction ops ----------------------------------------------------

    def input(self, name: str) -> InputRef:
        """Declare a named external input; the returned ref feeds one operator."""
        if name in self.inputs:
            raise InvalidArgument(f"duplicate input name {name!r}")
        self.inputs[name] = ""  # filled in when first consumed
        return InputRef(name)

    def source(self, input_name: Optional[str] = None) -> str:
        op_id = self._add(OpKind.SOURCE, ())
        name = input_name if input_name is not None else op_id
        if name in self.inputs:
            raise InvalidArgument(f"duplicate input name {name!r}")
        self.inputs[name] = op_id
        self.ops[op_id].params["input_name"] = name
        return op_id

    def _register_consumer(self, upstream, op_id: str) -> None:
        for ref in upstream:
            if isinstance(ref, InputRef):
                if self.inputs[ref.name]:
                    raise InvalidArgument(
                        f"input {ref.name!r} is already bound to {self.inputs[ref.name]!r}"
                    )
                self.inputs[ref.name] = op_id
                self.ops[op_id].params.setdefault("input_name", ref.name)

    def map(self, upstream, f: Kernel) -> str:
        op = self._add(OpKind.MAP, (upstream,), f)
        self._register_consumer((upstream,), op)
        return op

    def flat_map(self, upstream, f: Kernel) -> str:
        op = self._add(OpKind.FLAT_MAP, (upstream,), f)
        self._register_consumer((upstream,), op)
        return op

    def filter(self, upstream, f: Kernel) -> str:
        op = self._add(OpKind.FILTER, (upstream,), f)
        self._register_consumer((upstream,), op)
        return op

    def group_by_key(self, upstream) -> str:
        self._require_collection_mode("group_by_key")
        op = self._add(OpKind.GROUP_BY_KEY, (upstream,))
        self._register_consumer((upstream,), op)
        return op

    def reduce_by_key(self, upstream, f: Kernel) -> str:
        self._require_collection_mode("reduce_by_key")
        op = self._add(OpKind.REDUCE_BY_KEY, (upstream,), f)
        self._register_consumer((upstream,), op)
        return op

    def reduce(self, upstream, f: Kernel) -> str:
        self._require_collection_mode("reduce")
        op = self._add(OpKind.REDUCE, (upstream,), f)
        self._register_consumer((upstream,), op)
        return op

    def join(self, left, right) -> str:
        if self.mode is not Mode.BATCH:
            raise InvalidMode("join is only defined for batch programs")
        op = self._add(OpKind.JOIN, (left, right))
        self._register_consumer((left, right), op)
        return op

    def map_with_state(self, upstream, f: Kernel, init) -> str:
        if not self.mode.is_stream:
            raise InvalidMode("map_with_state requires a stream mode")
        op = self._add(OpKind.MAP_WITH_STATE, (upstream,), f, init=init)
        self._register_consumer((upstream,), op)
        return op

    def window(self, upstream, spec: WindowSpec) -> str:
        if self.mode is not Mode.TUPLE_STREAM:
            raise InvalidMode(
                "window requires a tuple stream; count-based windows have no "
                "meaning across micro-batch boundaries"
            )
        op = self._add(OpKind.WINDOW, (upstream,), spec=spec)
        self._register_consumer((upstream,), op)
        return op

    def iterate(
        self,
        upstream,
        body: "LogicalProgram",
        terminate: Kernel,
        max_iterations: int,
    ) -> str:
        if max_iterations < 1:
            raise InvalidArgument(
                f"max_iterations must be >= 1, got {max_iterations}"
            )
        if terminate.kind != "terminate":
            raise InvalidArgument("iterate needs a 'terminate' kernel")
        if body.mode is not Mode.BATCH:
            raise InvalidArgument("iteration bodies are batch programs")
        if len(body.inputs) != 1 or len(body.outputs) != 1:
            raise InvalidArgument(
                "iteration body must have exactly one input and one output"
            )
        op = self._add(
            OpKind.ITERATE,
            (upstream,),
            body=body,
            terminate=terminate,
            max_iterations=max_iterations,
        )
        self._register_consumer((upstream,), op)
        return op

    def sink(self, upstream, output_name: Optional[str] = None) -> str:
        op = self._add(OpKind.SINK, (upstream,))
        self._register_consumer((upstream,), op)
        name = output_name if output_name is not None else op
        if name in self.outputs:
            raise InvalidArgument(f"duplicate output name {name!r}")
        self.outputs[name] = op
        return op

    def mark_output(self, op_id: str, name: str) -> None:
        """Expose a non-sink operator's result under an output name."""
        if op_id not in self.ops:
            raise InvalidArgument(f"unknown op {op_id!r}")
        if name in self.outputs:
            raise InvalidArgument(f"duplicate output name {name!r}")
        self.outputs[name] = op_id

    def _require_collection_mode(self, what: str) -> None:
        if self.mode is Mode.TUPLE_STREAM:
            raise InvalidMode(
                f"{what} needs collection tokens; per-tuple aggregation is the "
                "job of map_with_state"
            )

    # -- queries -------------------------------------------------------------

    def successors(self, op_id: str) -> list[str]:
        return [
            o.op_id
            for o in self.ops.values()
            if any(ref == op_id for ref in o.upstream if isinstance(ref, str))
        ]

    def contains_kind(self, *kinds: OpKind) -> bool:
        for op in self.ops.values():
            if op.kind in kinds:
                return True
            if op.kind is OpKind.ITERATE and op.params["body"].contains_kind(*kinds):
                return True
        return False


def lift_to_stream(prog: LogicalProgram) -> LogicalProgram:
    """Reinterpret a batch program over a discretized stream.

    Every operator is applied chunk-wise: the stream output is the list of
    per-chunk batch outputs.  Join and iteration have no chunk-wise reading,
    so programs containing them are rejected.
    """
    if prog.mode is not Mode.BATCH:
        raise InvalidMode("lift_to_stream expects a batch program")
    if prog.contains_kind(OpKind.JOIN, OpKind.ITERATE):
        raise UnsupportedInStream(
            "join and iterate do not translate to micro-batch streams"
        )
    lifted = LogicalProgram(Mode.MICRO_BATCH_STREAM, name=prog.name + "_stream")
    lifted.ops = {
        op_id: LogicalOp(op.op_id, op.kind, op.upstream, op.kernel, dict(op.params))
        for op_id, op in prog.ops.items()
    }
    lifted.inputs = dict(prog.inputs)
    lifted.outputs = dict(prog.outputs)
    lifted._counter = prog._counter
    return lifted
