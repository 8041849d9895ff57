"""Exception hierarchy for the editloop engine."""

from __future__ import annotations


class EditLoopError(Exception):
    """Base class for every engine-raised error."""


class ConfigInvalid(EditLoopError):
    """A session or file configuration value violates its invariant."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"invalid config field {field!r}: {reason}")
        self.field = field
        self.reason = reason


class MissingBinding(EditLoopError):
    """A prompt template placeholder was left unbound at render time."""

    def __init__(self, name: str):
        super().__init__(f"unbound template placeholder: {name!r}")
        self.name = name


class BackendUnavailable(EditLoopError):
    """The requested backend id is unknown or unreachable. Retryable."""


class BackendTimeout(EditLoopError):
    """A backend call exceeded its deadline. Retryable."""


class ParseFailure(EditLoopError):
    """Backend output did not contain the required structured region."""

    def __init__(self, reason: str):
        super().__init__(f"parse failure: {reason}")
        self.reason = reason


class PlanEmpty(EditLoopError):
    """The planner backend returned zero sub-tasks."""


class DependencyCycle(EditLoopError):
    """Sub-task dependency edges form a cycle and no order exists."""


class PlanParseFailure(EditLoopError):
    """The orchestrator backend output held no parseable tool-chain."""

    def __init__(self, reason: str):
        super().__init__(f"tool-chain parse failure: {reason}")
        self.reason = reason


class PlanInvalid(EditLoopError):
    """A parsed tool-chain failed validation against the registry."""

    def __init__(self, reason: str):
        super().__init__(f"invalid tool-chain: {reason}")
        self.reason = reason


class ToolFailure(EditLoopError):
    """A tool invocation failed; aborts the rest of the chain."""

    def __init__(self, tool: str, cause: str):
        super().__init__(f"tool {tool!r} failed: {cause}")
        self.tool = tool
        self.cause = cause


class AllExpertsAbstained(EditLoopError):
    """Every panel expert abstained; no usable critique exists."""


class NoCritiques(EditLoopError):
    """Aggregation was asked to run with no non-abstaining critique."""


class SessionAborted(EditLoopError):
    """The session could not continue past the given turn/iteration."""

    def __init__(self, turn: int, iteration: int, cause: Exception | str):
        super().__init__(f"session aborted at turn {turn} iteration {iteration}: {cause}")
        self.turn = turn
        self.iteration = iteration
        self.cause = cause


class IoFailure(EditLoopError):
    """A trace or fixture file could not be read or written."""


class TraceCorrupt(EditLoopError):
    """A trace file is unreadable, incomplete, or of an unsupported version."""


class ReplayMismatch(EditLoopError):
    """Replaying a trace diverged from the recorded session."""

    def __init__(self, detail: str, first_divergent_event: int | None = None):
        super().__init__(f"replay mismatch: {detail}")
        self.detail = detail
        self.first_divergent_event = first_divergent_event
