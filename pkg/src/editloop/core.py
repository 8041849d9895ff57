"""Shared domain types: states, tasks, plans, critiques, session context.

Everything here is construction + validation only; behavior lives in the
planner, orchestrator, reflection, and loop modules. Types are immutable
after construction except SessionContext, which supports single-writer
append with concurrent readers.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import ConfigInvalid, NoCritiques

_SCORE_MIN = 0.0
_SCORE_MAX = 10.0


class StateOrigin(str, Enum):
    INITIAL = "initial"
    TOOL_OUTPUT = "tool-output"
    FALLBACK_SELECTED = "fallback-selected"


def content_hash(content: Any) -> str:
    """256-bit hex digest of a state payload.

    Raster payloads are raw bytes; structured payloads (scene graphs,
    masks) must expose canonical_bytes() so hashing is representation
    independent.
    """
    if isinstance(content, bytes):
        data = content
    elif hasattr(content, "canonical_bytes"):
        data = content.canonical_bytes()
    elif isinstance(content, str):
        data = content.encode("utf-8")
    else:
        raise TypeError(f"unhashable state content: {type(content).__name__}")
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class VisualState:
    """One image state: opaque content handle plus provenance metadata.

    The engine never decodes the payload; only tools and the gateway do.
    """

    id: str
    content: Any
    origin: StateOrigin = StateOrigin.INITIAL
    parent_id: str | None = None
    width: int | None = None
    height: int | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("state id must be non-empty")
        if (self.origin is StateOrigin.INITIAL) != (self.parent_id is None):
            raise ValueError("origin=initial iff parent_id is absent")

    def hash(self) -> str:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = content_hash(self.content)
            self.__dict__["_hash"] = cached
        return cached


@dataclass(frozen=True)
class Instruction:
    """A user-issued editing instruction for one turn."""

    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("instruction text must be non-empty")


@dataclass(frozen=True)
class SubTask:
    """One atomic instruction with dependency edges to earlier sub-tasks."""

    index: int
    text: str
    depends_on: frozenset[int] = frozenset()
    target_hint: str | None = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("sub-task index is 1-based")
        if not self.text.strip():
            raise ValueError("sub-task text must be non-empty")
        if any(dep >= self.index for dep in self.depends_on):
            raise ValueError("dependency edges must point to earlier indices")
        object.__setattr__(self, "depends_on", frozenset(self.depends_on))


@dataclass(frozen=True)
class ToolInvocation:
    """A single tool call inside a chain: tool, named args, output binding.

    Argument values are scalars, text, lists of text, or references.
    References are strings of the form ``$name`` or ``$name.field`` and
    resolve against prior bindings or the chain input at execution time.
    """

    tool_name: str
    args: tuple[tuple[str, Any], ...]
    output_binding: str

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")
        if not self.output_binding:
            raise ValueError("output_binding must be non-empty")
        object.__setattr__(self, "args", tuple(self.args))

    def arg_map(self) -> dict[str, Any]:
        return dict(self.args)


def _invocation_references(value: Any) -> Iterable[str]:
    if isinstance(value, str) and value.startswith("$"):
        yield value[1:].split(".", 1)[0]
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _invocation_references(item)


@dataclass(frozen=True)
class OrchestrationPlan:
    """One attempt's plan: rationale plus a validated, ordered tool-chain."""

    sub_task_index: int
    iteration: int
    rationale: str
    chain: tuple[ToolInvocation, ...]
    result_binding: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "chain", tuple(self.chain))
        if not self.chain:
            raise ValueError("chain must be non-empty")
        if self.iteration < 0:
            raise ValueError("iteration is 0-based")
        bound = {"input"}
        for inv in self.chain:
            for ref in {r for _, v in inv.args for r in _invocation_references(v)}:
                if ref not in bound:
                    raise ValueError(f"forward or undefined reference: ${ref}")
            if inv.output_binding in bound:
                raise ValueError(f"binding reassigned: {inv.output_binding}")
            bound.add(inv.output_binding)
        if self.result_binding not in bound - {"input"}:
            raise ValueError("result_binding is not produced by any invocation")


@dataclass(frozen=True)
class Critique:
    """One expert's raw verdict: positive text, negative text, score."""

    expert_id: str
    positive: str
    negative: str
    score: float
    abstained: bool = False
    score_clamped: bool = False

    def __post_init__(self) -> None:
        if not self.abstained and not (_SCORE_MIN <= self.score <= _SCORE_MAX):
            raise ValueError(f"score {self.score} outside [0, 10]")


@dataclass(frozen=True)
class ConsensusFeedback:
    """Panel consensus: merged positive/negative texts and the mean score."""

    positive: str
    negative: str
    score: float
    contributing_expert_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (_SCORE_MIN <= self.score <= _SCORE_MAX):
            raise ValueError(f"score {self.score} outside [0, 10]")
        object.__setattr__(
            self, "contributing_expert_ids", tuple(self.contributing_expert_ids)
        )


@dataclass(frozen=True)
class AttemptRecord:
    """One completed attempt: the plan, the state it produced, its feedback."""

    plan: OrchestrationPlan
    state: VisualState
    feedback: ConsensusFeedback


@dataclass(frozen=True)
class SessionConfig:
    """Control-loop parameters and backend role assignments."""

    success_threshold: float = 7.0
    max_iterations: int = 3
    expert_panel: tuple[str, ...] = ()
    aggregator: str = ""
    planner: str = ""
    orchestrator: str = ""
    context_window: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "expert_panel", tuple(self.expert_panel))


def validate_session_config(cfg: SessionConfig) -> SessionConfig:
    """Return cfg unchanged iff every invariant holds."""
    if cfg.max_iterations < 1:
        raise ConfigInvalid("max_iterations", "must be >= 1")
    if not (_SCORE_MIN <= cfg.success_threshold <= _SCORE_MAX):
        raise ConfigInvalid("success_threshold", "must lie in [0, 10]")
    if not cfg.expert_panel:
        raise ConfigInvalid("expert_panel", "must name at least one expert")
    if cfg.context_window is not None and cfg.context_window < 0:
        raise ConfigInvalid("context_window", "must be >= 0 when set")
    return cfg


class SessionContext:
    """The session's history: initial state, attempt trajectory, accepted turns.

    Append-only: records are never mutated or removed within a session.
    One writer may append while any number of readers iterate snapshots.
    """

    def __init__(
        self,
        initial: VisualState,
        max_attempts_per_subtask: int | None = None,
    ):
        if initial.origin is not StateOrigin.INITIAL:
            raise ValueError("session context must start from an initial state")
        self.initial = initial
        self._max_attempts = max_attempts_per_subtask
        self._attempts: list[AttemptRecord] = []
        self._completed: list[VisualState] = []
        self._state_ids: set[str] = {initial.id}
        self._lock = threading.Lock()

    @property
    def attempts(self) -> tuple[AttemptRecord, ...]:
        with self._lock:
            return tuple(self._attempts)

    @property
    def completed(self) -> tuple[VisualState, ...]:
        with self._lock:
            return tuple(self._completed)

    def attempts_for(self, sub_task_index: int) -> tuple[AttemptRecord, ...]:
        return tuple(
            rec for rec in self.attempts if rec.plan.sub_task_index == sub_task_index
        )

    def append_attempt(self, record: AttemptRecord) -> None:
        with self._lock:
            if record.state.id in self._state_ids:
                raise ValueError(f"duplicate state id in session: {record.state.id}")
            if self._max_attempts is not None:
                used = sum(
                    1
                    for rec in self._attempts
                    if rec.plan.sub_task_index == record.plan.sub_task_index
                )
                if used >= self._max_attempts:
                    raise ValueError(
                        f"sub-task {record.plan.sub_task_index} exceeded "
                        f"{self._max_attempts} attempts"
                    )
            self._attempts.append(record)
            self._state_ids.add(record.state.id)

    def append_completed(self, state: VisualState) -> None:
        with self._lock:
            self._completed.append(state)
            self._state_ids.add(state.id)

    def register_state_id(self, state_id: str) -> None:
        """Reserve an id minted outside append paths (detection sub-images)."""
        with self._lock:
            if state_id in self._state_ids:
                raise ValueError(f"duplicate state id in session: {state_id}")
            self._state_ids.add(state_id)


def context_view(ctx: SessionContext, window: int | None = None) -> str:
    """Serialize the context for backend prompts.

    Lists the most recent `window` attempt records (all when absent), each
    with its rationale, feedback texts, and score, oldest first. Storage is
    never truncated; only this rendering is.
    """
    lines = [f"initial state: {ctx.initial.id}"]
    records: Sequence[AttemptRecord] = ctx.attempts
    if window is not None:
        records = records[len(records) - min(window, len(records)):]
    for rec in records:
        lines.append(
            f"attempt sub_task={rec.plan.sub_task_index} "
            f"iteration={rec.plan.iteration} score={rec.feedback.score:g}"
        )
        lines.append(f"  rationale: {rec.plan.rationale}")
        lines.append(f"  positive: {rec.feedback.positive}")
        lines.append(f"  negative: {rec.feedback.negative}")
    for idx, state in enumerate(ctx.completed, start=1):
        lines.append(f"completed turn {idx}: state {state.id}")
    return "\n".join(lines)


def mean_score(critiques: Iterable[Critique]) -> float:
    """Arithmetic mean of the non-abstaining critique scores."""
    scores = [c.score for c in critiques if not c.abstained]
    if not scores:
        raise NoCritiques("no non-abstaining critiques to average")
    return sum(scores) / len(scores)


def freeze_args(args: Mapping[str, Any] | Sequence[tuple[str, Any]]) -> tuple[tuple[str, Any], ...]:
    """Normalize argument maps into the ordered tuple form ToolInvocation uses."""
    if isinstance(args, Mapping):
        items: Iterable[tuple[str, Any]] = args.items()
    else:
        items = args
    out = []
    for name, value in items:
        if isinstance(value, list):
            value = tuple(value)
        out.append((name, value))
    return tuple(out)
