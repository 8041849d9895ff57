"""Tool registry, chain parsing/validation, and sequential chain execution.

A chain is a declarative list of tool invocations with single-assignment
bindings, parsed from a fenced block in the orchestrator backend's output:

    binding = tool_name(arg_name=value, ...)
    ...
    return $binding

Values are double-quoted strings, numbers, lists like ["a", "b"], or
references: ``$input`` for the chain input, ``$binding`` for an earlier
output, ``$binding.field`` for a detection-record field. The final line
names the binding handed back as the edited image.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Protocol, Sequence

from .backends.base import BackendHub, BackendRequest
from .backends.parsing import _scan_quoted, format_string_array
from .backends.templates import PromptTemplate, TemplateName, load_template, render
from .core import (
    OrchestrationPlan,
    SessionContext,
    SubTask,
    ToolInvocation,
    VisualState,
    context_view,
    freeze_args,
)
from .costing import CostLedger
from .errors import PlanInvalid, PlanParseFailure, ToolFailure


class ParamKind(str, Enum):
    STATE = "state"
    MASK = "mask"
    TEXT = "text"
    TEXT_LIST = "text-list"
    REFERENCE_STATE = "reference-state"


class ReturnKind(str, Enum):
    STATE = "state"
    MASK = "mask"
    DETECTION_RECORD = "detection-record"


class CostClass(str, Enum):
    LOCAL = "local"
    CLOUD = "cloud"


@dataclass(frozen=True)
class ToolParam:
    name: str
    kind: ParamKind
    required: bool = True


@dataclass(frozen=True)
class ToolSchema:
    name: str
    params: tuple[ToolParam, ...]
    returns: ReturnKind
    cost_class: CostClass = CostClass.LOCAL
    internal: bool = False  # engine utilities hidden from the public tool count

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))

    def param(self, name: str) -> ToolParam | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class DetectionRecord:
    """Detection + segmentation output for one target."""

    target_box: tuple[int, int, int, int]
    maxscore: float
    box_image: VisualState
    original_mask: VisualState
    white_mask: VisualState
    cutout_image: VisualState

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.target_box
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise ValueError(f"degenerate target box: {self.target_box}")
        if not (0.0 <= self.maxscore <= 1.0):
            raise ValueError(f"maxscore {self.maxscore} outside [0, 1]")


# Field name -> kind a $binding.field reference resolves to.
DETECTION_FIELD_KINDS: Mapping[str, str] = {
    "target_box": "text",
    "maxscore": "text",
    "box_image": "state",
    "original_mask": "mask",
    "white_mask": "mask",
    "cutout_image": "state",
}


class ToolRuntime(Protocol):
    """Mints provenance-tracked states for tool implementations."""

    def new_state(
        self, content: Any, parent: VisualState, width: int | None = None,
        height: int | None = None, origin: Any = None,
    ) -> VisualState: ...


class SessionStateFactory:
    """Default ToolRuntime: sequential ids scoped to one session."""

    def __init__(self, prefix: str = "s", start: int = 1):
        self._prefix = prefix
        self._next = start

    def new_state(
        self,
        content: Any,
        parent: VisualState,
        width: int | None = None,
        height: int | None = None,
        origin: Any = None,
    ) -> VisualState:
        from .core import StateOrigin

        state = VisualState(
            id=f"{self._prefix}{self._next}",
            content=content,
            origin=origin if origin is not None else StateOrigin.TOOL_OUTPUT,
            parent_id=parent.id,
            width=width if width is not None else parent.width,
            height=height if height is not None else parent.height,
        )
        self._next += 1
        return state


ToolImpl = Callable[[dict[str, Any], "ToolRuntime", VisualState], Any]


class ToolRegistry:
    """Tool schemas plus their executable implementations.

    Every schema carries an implementation; len() counts only the public
    suite, not engine-internal utilities.
    """

    def __init__(self) -> None:
        self._schemas: dict[str, ToolSchema] = {}
        self._impls: dict[str, ToolImpl] = {}

    def register(self, schema: ToolSchema, impl: ToolImpl) -> None:
        if schema.name in self._schemas:
            raise ValueError(f"duplicate tool name: {schema.name}")
        self._schemas[schema.name] = schema
        self._impls[schema.name] = impl

    def bind(self, name: str, impl: ToolImpl) -> None:
        """Swap the implementation behind an existing schema."""
        if name not in self._schemas:
            raise KeyError(name)
        self._impls[name] = impl

    def schema(self, name: str) -> ToolSchema | None:
        return self._schemas.get(name)

    def impl(self, name: str) -> ToolImpl:
        return self._impls[name]

    def public_names(self) -> list[str]:
        return [n for n, s in self._schemas.items() if not s.internal]

    def __contains__(self, name: str) -> bool:
        return name in self._schemas

    def __len__(self) -> int:
        return len(self.public_names())


def _unwired(name: str) -> ToolImpl:
    def impl(args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState) -> Any:
        raise ToolFailure(name, "no implementation wired")

    return impl


_OPTIONAL_NEGATIVES = ToolParam("negatives", ParamKind.TEXT_LIST, required=False)

DEFAULT_SCHEMAS: tuple[ToolSchema, ...] = (
    ToolSchema(
        "inpaint",
        (
            ToolParam("image", ParamKind.STATE),
            ToolParam("mask", ParamKind.MASK),
            ToolParam("prompt", ParamKind.TEXT),
            _OPTIONAL_NEGATIVES,
        ),
        ReturnKind.STATE,
    ),
    ToolSchema(
        "inpaint_by_adapter",
        (
            ToolParam("image", ParamKind.STATE),
            ToolParam("mask", ParamKind.MASK),
            ToolParam("prompt", ParamKind.TEXT),
            ToolParam("reference", ParamKind.REFERENCE_STATE),
            _OPTIONAL_NEGATIVES,
        ),
        ReturnKind.STATE,
    ),
    ToolSchema(
        "edit_by_pipe",
        (
            ToolParam("image", ParamKind.STATE),
            ToolParam("prompt", ParamKind.TEXT),
            ToolParam("negative_prompt", ParamKind.TEXT),
        ),
        ReturnKind.STATE,
    ),
    ToolSchema(
        "edit_by_api",
        (
            ToolParam("image", ParamKind.STATE),
            ToolParam("prompt", ParamKind.TEXT),
            ToolParam("negative_prompt", ParamKind.TEXT),
        ),
        ReturnKind.STATE,
        cost_class=CostClass.CLOUD,
    ),
    ToolSchema(
        "detect_segment",
        (
            ToolParam("image", ParamKind.STATE),
            ToolParam("target", ParamKind.TEXT),
        ),
        ReturnKind.DETECTION_RECORD,
    ),
    ToolSchema(
        "retrieve_image",
        (ToolParam("target", ParamKind.TEXT),),
        ReturnKind.STATE,
    ),
)

DRAW_BOX_SCHEMA = ToolSchema(
    "draw_box",
    (
        ToolParam("image", ParamKind.STATE),
        ToolParam("box", ParamKind.TEXT),
        ToolParam("width", ParamKind.TEXT, required=False),
    ),
    ReturnKind.STATE,
    internal=True,
)


def default_registry(
    implementations: Mapping[str, ToolImpl] | None = None,
) -> ToolRegistry:
    """The standard six-tool suite plus the internal draw_box utility.

    Implementations default to loud placeholders; simworld or gateway
    wiring binds the real ones.
    """
    registry = ToolRegistry()
    impls = dict(implementations or {})
    for schema in (*DEFAULT_SCHEMAS, DRAW_BOX_SCHEMA):
        registry.register(schema, impls.get(schema.name, _unwired(schema.name)))
    return registry


# --- chain text parsing ----------------------------------------------------

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")
_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)```", re.DOTALL)
_REFERENCE_RE = re.compile(r"\$([A-Za-z_][A-Za-z0-9_]*)(?:\.([A-Za-z_][A-Za-z0-9_]*))?")


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t":
        i += 1
    return i


def _parse_value(text: str, i: int) -> tuple[Any, int]:
    i = _skip_ws(text, i)
    if i >= len(text):
        raise PlanParseFailure("unexpected end of invocation line")
    c = text[i]
    if c == '"':
        scanned = _scan_quoted(text, i)
        if scanned is None:
            raise PlanParseFailure("unterminated string literal")
        return scanned
    if c == "$":
        m = _REFERENCE_RE.match(text, i)
        if not m:
            raise PlanParseFailure(f"malformed reference at column {i}")
        return m.group(0), m.end()
    if c == "[":
        items: list[Any] = []
        i = _skip_ws(text, i + 1)
        if i < len(text) and text[i] == "]":
            return tuple(items), i + 1
        while True:
            value, i = _parse_value(text, i)
            items.append(value)
            i = _skip_ws(text, i)
            if i >= len(text):
                raise PlanParseFailure("unterminated list literal")
            if text[i] == "]":
                return tuple(items), i + 1
            if text[i] != ",":
                raise PlanParseFailure(f"expected ',' in list at column {i}")
            i += 1
    m = _NUMBER_RE.match(text, i)
    if m:
        raw = m.group(0)
        return (float(raw) if "." in raw else int(raw)), m.end()
    raise PlanParseFailure(f"unparseable value at column {i}: {text[i:i+20]!r}")


def _parse_invocation(line: str) -> ToolInvocation:
    m = _IDENT_RE.match(line)
    if not m:
        raise PlanParseFailure(f"expected binding name: {line!r}")
    binding = m.group(0)
    i = _skip_ws(line, m.end())
    if i >= len(line) or line[i] != "=":
        raise PlanParseFailure(f"expected '=' after binding: {line!r}")
    i = _skip_ws(line, i + 1)
    m = _IDENT_RE.match(line, i)
    if not m:
        raise PlanParseFailure(f"expected tool name: {line!r}")
    tool_name = m.group(0)
    i = _skip_ws(line, m.end())
    if i >= len(line) or line[i] != "(":
        raise PlanParseFailure(f"expected '(' after tool name: {line!r}")
    i = _skip_ws(line, i + 1)
    args: list[tuple[str, Any]] = []
    if i < len(line) and line[i] == ")":
        i += 1
    else:
        while True:
            m = _IDENT_RE.match(line, i)
            if not m:
                raise PlanParseFailure(f"expected argument name: {line!r}")
            arg_name = m.group(0)
            i = _skip_ws(line, m.end())
            if i >= len(line) or line[i] != "=":
                raise PlanParseFailure(f"expected '=' after argument name: {line!r}")
            value, i = _parse_value(line, i + 1)
            args.append((arg_name, value))
            i = _skip_ws(line, i)
            if i < len(line) and line[i] == ",":
                i = _skip_ws(line, i + 1)
                continue
            if i < len(line) and line[i] == ")":
                i += 1
                break
            raise PlanParseFailure(f"expected ',' or ')' in arguments: {line!r}")
    if _skip_ws(line, i) != len(line):
        raise PlanParseFailure(f"trailing text after invocation: {line!r}")
    return ToolInvocation(tool_name=tool_name, args=freeze_args(args), output_binding=binding)


def _parse_chain_body(body: str) -> tuple[tuple[ToolInvocation, ...], str]:
    invocations: list[ToolInvocation] = []
    result: str | None = None
    for raw_line in body.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        if result is not None:
            raise PlanParseFailure("content after the return line")
        if line.startswith("return"):
            rest = line[len("return"):].strip()
            m = _REFERENCE_RE.fullmatch(rest)
            if not m or m.group(2):
                raise PlanParseFailure(f"malformed return line: {line!r}")
            result = m.group(1)
            continue
        invocations.append(_parse_invocation(line))
    if result is None:
        raise PlanParseFailure("missing return line")
    if not invocations:
        raise PlanParseFailure("chain has no invocations")
    return tuple(invocations), result


def parse_chain_text(text: str) -> tuple[tuple[ToolInvocation, ...], str, str]:
    """Extract (invocations, result_binding, rationale) from model output.

    The chain is the first fenced block that parses; everything outside
    that block is kept verbatim as the rationale. Unfenced output that
    parses as a whole is accepted with an empty rationale.
    """
    failures: list[str] = []
    for m in _FENCE_RE.finditer(text):
        try:
            invocations, result = _parse_chain_body(m.group(2))
        except PlanParseFailure as exc:
            failures.append(exc.reason)
            continue
        rationale = (text[: m.start()] + text[m.end():]).strip()
        return invocations, result, rationale
    try:
        invocations, result = _parse_chain_body(text)
        return invocations, result, ""
    except PlanParseFailure as exc:
        failures.append(exc.reason)
    raise PlanParseFailure("; ".join(failures) or "no tool-chain block found")


# --- chain validation -------------------------------------------------------


def _reference_kind(
    ref: str, produced: Mapping[str, ToolSchema | None]
) -> str:
    m = _REFERENCE_RE.fullmatch(ref)
    assert m is not None
    name, fieldname = m.group(1), m.group(2)
    if name not in produced:
        raise PlanInvalid(f"reference to undefined binding: ${name}")
    schema = produced[name]
    if schema is None:  # the chain input
        if fieldname:
            raise PlanInvalid("$input has no fields")
        return "state"
    if fieldname:
        if schema.returns is not ReturnKind.DETECTION_RECORD:
            raise PlanInvalid(
                f"${name}.{fieldname}: {schema.name} returns no record fields"
            )
        kind = DETECTION_FIELD_KINDS.get(fieldname)
        if kind is None:
            raise PlanInvalid(f"unknown detection field: {fieldname}")
        return kind
    if schema.returns is ReturnKind.DETECTION_RECORD:
        return "detection-record"
    return schema.returns.value


_ACCEPTED: Mapping[ParamKind, frozenset[str]] = {
    ParamKind.STATE: frozenset({"state"}),
    ParamKind.REFERENCE_STATE: frozenset({"state"}),
    ParamKind.MASK: frozenset({"mask"}),
    ParamKind.TEXT: frozenset({"text"}),
    ParamKind.TEXT_LIST: frozenset({"text-list"}),
}


def _literal_kind(value: Any) -> str:
    if isinstance(value, str) and value.startswith("$"):
        raise AssertionError("references handled separately")
    if isinstance(value, str):
        return "text"
    if isinstance(value, (int, float)):
        return "text"
    if isinstance(value, tuple):
        if all(isinstance(v, str) and not v.startswith("$") for v in value):
            return "text-list"
        raise PlanInvalid("lists may contain only string literals")
    raise PlanInvalid(f"unsupported literal: {value!r}")


def validate_chain(
    invocations: Sequence[ToolInvocation],
    result_binding: str,
    registry: ToolRegistry,
) -> None:
    """Static checks: names, bindings, parameter presence, argument kinds."""
    produced: dict[str, ToolSchema | None] = {"input": None}
    for inv in invocations:
        schema = registry.schema(inv.tool_name)
        if schema is None:
            raise PlanInvalid(f"unknown tool: {inv.tool_name}")
        if inv.output_binding in produced:
            raise PlanInvalid(f"binding reassigned: {inv.output_binding}")
        seen: set[str] = set()
        for arg_name, value in inv.args:
            param = schema.param(arg_name)
            if param is None:
                raise PlanInvalid(f"{inv.tool_name} has no parameter {arg_name!r}")
            if arg_name in seen:
                raise PlanInvalid(f"duplicate argument {arg_name!r}")
            seen.add(arg_name)
            if isinstance(value, str) and value.startswith("$"):
                kind = _reference_kind(value, produced)
            else:
                kind = _literal_kind(value)
            if kind not in _ACCEPTED[param.kind]:
                raise PlanInvalid(
                    f"{inv.tool_name}.{arg_name} expects {param.kind.value}, got {kind}"
                )
        for param in schema.params:
            if param.required and param.name not in seen:
                raise PlanInvalid(f"{inv.tool_name} missing argument {param.name!r}")
        produced[inv.output_binding] = schema
    if result_binding not in produced or result_binding == "input":
        raise PlanInvalid(f"result binding ${result_binding} is not produced")
    final_schema = produced[result_binding]
    assert final_schema is not None
    if final_schema.returns is not ReturnKind.STATE:
        raise PlanInvalid("the chain result must be an edited image")


def negative_prompt_accumulate(ctx: SessionContext, sub_task_index: int) -> list[str]:
    """Non-empty negative feedback from this sub-task's prior attempts.

    Deduplicated case-insensitively, oldest first.
    """
    seen: set[str] = set()
    out: list[str] = []
    for rec in ctx.attempts:
        if rec.plan.sub_task_index != sub_task_index:
            continue
        negative = rec.feedback.negative.strip()
        if not negative:
            continue
        key = negative.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(negative)
    return out


def orchestrate(
    prev: VisualState,
    task: SubTask,
    ctx: SessionContext,
    hub: BackendHub,
    orchestrator_id: str,
    registry: ToolRegistry,
    template: PromptTemplate | None = None,
    context_window: int | None = None,
) -> OrchestrationPlan:
    """Ask the backend for a tool-chain and validate it against the registry.

    The prompt carries the current image, the sub-task, the context digest,
    and the accumulated negative feedback for this sub-task. One re-ask is
    issued when the reply holds no parseable chain.
    """
    negatives = negative_prompt_accumulate(ctx, task.index)
    tpl = template or load_template(TemplateName.ORCHESTRATOR)
    bindings = {
        "subtask": task.text,
        "context_digest": context_view(ctx, context_window),
        "negatives": format_string_array(negatives),
    }
    request = BackendRequest(
        backend_id=orchestrator_id,
        prompt=render(tpl, bindings),
        attachments=(prev,),
        bindings=tuple(bindings.items()),
    )
    response = hub.invoke_with_retry(request, phase="tool")
    try:
        invocations, result_binding, rationale = parse_chain_text(response.text)
    except PlanParseFailure:
        response = hub.invoke_with_retry(request, phase="tool")
        invocations, result_binding, rationale = parse_chain_text(response.text)
    validate_chain(invocations, result_binding, registry)
    iteration = len(ctx.attempts_for(task.index))
    try:
        return OrchestrationPlan(
            sub_task_index=task.index,
            iteration=iteration,
            rationale=rationale,
            chain=invocations,
            result_binding=result_binding,
        )
    except ValueError as exc:
        raise PlanInvalid(str(exc)) from exc


# --- execution ---------------------------------------------------------------


def _resolve(value: Any, env: Mapping[str, Any], param: ToolParam) -> Any:
    if isinstance(value, str) and value.startswith("$"):
        m = _REFERENCE_RE.fullmatch(value)
        assert m is not None
        resolved = env[m.group(1)]
        if m.group(2):
            resolved = getattr(resolved, m.group(2))
    else:
        resolved = value
    if param.kind in (ParamKind.TEXT, ParamKind.TEXT_LIST):
        return _as_text(resolved, list_ok=param.kind is ParamKind.TEXT_LIST)
    return resolved


def _as_text(value: Any, list_ok: bool) -> Any:
    if list_ok:
        return tuple(str(v) for v in value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def execute(
    plan: OrchestrationPlan,
    chain_input: VisualState,
    registry: ToolRegistry,
    runtime: ToolRuntime | None = None,
    ledger: CostLedger | None = None,
) -> VisualState:
    """Run the chain strictly in order and return its result state.

    Every tool call lands in the cost ledger with its cost class and
    outcome. A ToolFailure aborts the chain; retry policy belongs to the
    loop controller, never here.
    """
    runtime = runtime or SessionStateFactory(prefix=f"{chain_input.id}.")
    env: dict[str, Any] = {"input": chain_input}
    for inv in plan.chain:
        schema = registry.schema(inv.tool_name)
        if schema is None:
            raise PlanInvalid(f"unknown tool: {inv.tool_name}")
        args = {
            name: _resolve(value, env, schema.param(name) or ToolParam(name, ParamKind.TEXT))
            for name, value in inv.args
        }
        impl = registry.impl(inv.tool_name)
        try:
            result = impl(args, runtime, chain_input)
        except ToolFailure:
            if ledger is not None:
                ledger.record_images(
                    "tool", inv.tool_name, 1,
                    cost_class=schema.cost_class.value, outcome="failure",
                )
            raise
        if ledger is not None:
            ledger.record_images(
                "tool", inv.tool_name, 1,
                cost_class=schema.cost_class.value, outcome="ok",
            )
        env[inv.output_binding] = result
    final = env[plan.result_binding]
    if not isinstance(final, VisualState):
        raise PlanInvalid("chain result did not produce an image state")
    return final
