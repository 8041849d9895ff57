"""Progress events a running session emits to its observers.

Trace recording, the CLI console printer, and the live session stream all
consume this one interface. Field values are wire-friendly scalars so
events serialize without further translation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Callable, Mapping


@dataclass(frozen=True)
class SessionEvent:
    def kind(self) -> str:
        return _KIND_BY_TYPE[type(self)]

    def payload(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SessionStarted(SessionEvent):
    instruction: str
    config: tuple[tuple[str, Any], ...]
    initial_state_id: str
    initial_state_hash: str


@dataclass(frozen=True)
class PlanReady(SessionEvent):
    tasks: tuple[str, ...]
    depends_on: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class TurnStarted(SessionEvent):
    sub_task_index: int
    text: str


@dataclass(frozen=True)
class AttemptScored(SessionEvent):
    sub_task_index: int
    iteration: int
    rationale: str
    chain: str
    state_id: str
    state_hash: str
    parent_state_hash: str
    score: float
    positive: str
    negative: str
    tool_outcome: str  # "ok" or "failure:<tool>"


@dataclass(frozen=True)
class TurnCompleted(SessionEvent):
    sub_task_index: int
    accepted_via: str  # "threshold" or "fallback"
    accepted_score: float
    iterations_used: int
    state_id: str
    state_hash: str


@dataclass(frozen=True)
class SessionFinished(SessionEvent):
    final_state_id: str
    final_state_hash: str
    result_hash: str
    ledger_totals: tuple[tuple[str, int], ...]


_KIND_BY_TYPE: Mapping[type, str] = {
    SessionStarted: "session_started",
    PlanReady: "plan_ready",
    TurnStarted: "turn_started",
    AttemptScored: "attempt_scored",
    TurnCompleted: "turn_completed",
    SessionFinished: "session_finished",
}

KIND_TO_TYPE: Mapping[str, type] = {v: k for k, v in _KIND_BY_TYPE.items()}

Observer = Callable[[SessionEvent], None]
