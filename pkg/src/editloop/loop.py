"""The session controller: plan once, then per sub-task iterate
orchestrate -> execute -> reflect until the consensus score clears the
threshold, retrying with accumulated negatives up to the iteration cap
and falling back to the best-scored candidate when nothing clears it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .backends.base import BackendHub
from .backends.templates import PromptTemplate, TemplateName, builtin_templates
from .core import (
    AttemptRecord,
    ConsensusFeedback,
    Instruction,
    SessionConfig,
    SessionContext,
    StateOrigin,
    VisualState,
    validate_session_config,
)
from .costing import CostLedger
from .errors import (
    AllExpertsAbstained,
    BackendTimeout,
    BackendUnavailable,
    ParseFailure,
    PlanEmpty,
    PlanInvalid,
    PlanParseFailure,
    SessionAborted,
    ToolFailure,
)
from .events import (
    AttemptScored,
    Observer,
    PlanReady,
    SessionFinished,
    SessionStarted,
    TurnCompleted,
    TurnStarted,
)
from .orchestrator import SessionStateFactory, ToolRegistry, execute, orchestrate
from .planner import plan
from .reflection import ReflectionRequest, aggregate, critique_panel

ACCEPTED_VIA_THRESHOLD = "threshold"
ACCEPTED_VIA_FALLBACK = "fallback"


class Decision(Enum):
    ACCEPT = "accept"
    RETRY = "retry"
    FALLBACK = "fallback"


def should_accept(score: float, attempts_made: int, cfg: SessionConfig) -> Decision:
    """Accept at or above the threshold; retry while attempts remain."""
    if score >= cfg.success_threshold:
        return Decision.ACCEPT
    if attempts_made < cfg.max_iterations:
        return Decision.RETRY
    return Decision.FALLBACK


def select_best(
    candidates: Sequence[tuple[VisualState, ConsensusFeedback]],
) -> VisualState:
    """The candidate with the highest consensus score; ties go earliest."""
    if not candidates:
        raise ValueError("select_best requires at least one candidate")
    best_state, best_score = candidates[0][0], candidates[0][1].score
    for state, feedback in candidates[1:]:
        if feedback.score > best_score:
            best_state, best_score = state, feedback.score
    return best_state


@dataclass(frozen=True)
class TurnSummary:
    sub_task_index: int
    sub_task: str
    iterations_used: int
    accepted_score: float
    accepted_via: str

    def __post_init__(self) -> None:
        if self.iterations_used < 1:
            raise ValueError("iterations_used must be >= 1")
        if self.accepted_via not in (ACCEPTED_VIA_THRESHOLD, ACCEPTED_VIA_FALLBACK):
            raise ValueError(f"unknown acceptance mode: {self.accepted_via}")


@dataclass(frozen=True)
class SessionResult:
    final: VisualState
    per_turn: tuple[TurnSummary, ...]
    ledger: CostLedger | None
    context: SessionContext
    result_hash: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_turn", tuple(self.per_turn))


def compute_result_hash(
    final_hash: str,
    per_turn: Sequence[TurnSummary],
    attempt_digests: Sequence[tuple[int, int, float, str]],
) -> str:
    """Stable digest of everything replay must reproduce (no timestamps)."""
    doc = {
        "final": final_hash,
        "turns": [
            [t.sub_task_index, t.accepted_via, t.accepted_score, t.iterations_used]
            for t in per_turn
        ],
        "attempts": [list(a) for a in attempt_digests],
    }
    blob = json.dumps(doc, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _chain_text(plan_obj) -> str:
    lines = []
    for inv in plan_obj.chain:
        rendered_args = []
        for name, value in inv.args:
            if isinstance(value, tuple):
                rendered = "[" + ", ".join(json.dumps(v) for v in value) + "]"
            elif isinstance(value, str) and value.startswith("$"):
                rendered = value
            elif isinstance(value, str):
                rendered = json.dumps(value)
            else:
                rendered = repr(value)
            rendered_args.append(f"{name}={rendered}")
        lines.append(f"{inv.output_binding} = {inv.tool_name}({', '.join(rendered_args)})")
    lines.append(f"return ${plan_obj.result_binding}")
    return "\n".join(lines)


_ESCALATED = (BackendUnavailable, BackendTimeout, ParseFailure, PlanParseFailure, PlanInvalid)


def run_session(
    initial: VisualState,
    instruction: Instruction,
    cfg: SessionConfig,
    registry: ToolRegistry,
    hub: BackendHub,
    ledger: CostLedger | None = None,
    observers: Sequence[Observer] = (),
    templates: dict[TemplateName, PromptTemplate] | None = None,
    state_factory: SessionStateFactory | None = None,
) -> SessionResult:
    """Run one full session and return its accepted final state.

    Planning happens exactly once. Tool failures and unscoreable attempts
    become zero-score attempts so the iteration accounting stays uniform;
    unrecoverable backend errors abort the session.
    """
    validate_session_config(cfg)
    tpl = templates or builtin_templates()
    runtime = state_factory or SessionStateFactory()
    ctx = SessionContext(initial, max_attempts_per_subtask=cfg.max_iterations)

    def emit(event) -> None:
        for observer in observers:
            observer(event)

    if observers:
        emit(
            SessionStarted(
                instruction=instruction.text,
                config=(
                    ("success_threshold", cfg.success_threshold),
                    ("max_iterations", cfg.max_iterations),
                    ("expert_panel", list(cfg.expert_panel)),
                    ("aggregator", cfg.aggregator),
                    ("planner", cfg.planner),
                    ("orchestrator", cfg.orchestrator),
                    ("context_window", cfg.context_window),
                ),
                initial_state_id=initial.id,
                initial_state_hash=initial.hash(),
            )
        )

    try:
        sequence = plan(initial, instruction, hub, cfg.planner, tpl[TemplateName.PLANNER])
    except PlanEmpty:
        raise
    except _ESCALATED as exc:
        raise SessionAborted(0, 0, exc) from exc
    if observers:
        emit(
            PlanReady(
                tasks=tuple(t.text for t in sequence),
                depends_on=tuple(tuple(sorted(t.depends_on)) for t in sequence),
            )
        )

    per_turn: list[TurnSummary] = []
    attempt_digests: list[tuple[int, int, float, str]] = []
    prev = initial
    for task in sequence:
        if observers:
            emit(TurnStarted(sub_task_index=task.index, text=task.text))
        candidates: list[tuple[VisualState, ConsensusFeedback]] = []
        accepted: VisualState | None = None
        accepted_score = 0.0
        iterations_used = 0
        for iteration in range(cfg.max_iterations):
            try:
                attempt_plan = orchestrate(
                    prev,
                    task,
                    ctx,
                    hub,
                    cfg.orchestrator,
                    registry,
                    tpl[TemplateName.ORCHESTRATOR],
                    cfg.context_window,
                )
            except _ESCALATED as exc:
                raise SessionAborted(task.index, iteration, exc) from exc
            tool_outcome = "ok"
            try:
                state = execute(attempt_plan, prev, registry, runtime, ledger)
            except ToolFailure as exc:
                state = runtime.new_state(prev.content, prev)
                feedback = ConsensusFeedback(
                    positive="",
                    negative=f"{exc.tool}: {exc.cause}",
                    score=0.0,
                )
                tool_outcome = f"failure:{exc.tool}"
            else:
                try:
                    critiques = critique_panel(
                        ReflectionRequest(pre=prev, post=state, task=task),
                        hub,
                        cfg.expert_panel,
                        tpl[TemplateName.EXPERT],
                    )
                    feedback = aggregate(
                        critiques,
                        hub,
                        cfg.aggregator,
                        cfg.expert_panel,
                        tpl[TemplateName.AGGREGATOR],
                    )
                except AllExpertsAbstained:
                    feedback = ConsensusFeedback(
                        positive="", negative="evaluation unavailable", score=0.0
                    )
            ctx.append_attempt(AttemptRecord(attempt_plan, state, feedback))
            candidates.append((state, feedback))
            iterations_used = iteration + 1
            attempt_digests.append(
                (task.index, iteration, feedback.score, state.hash())
            )
            if observers:
                emit(
                    AttemptScored(
                        sub_task_index=task.index,
                        iteration=iteration,
                        rationale=attempt_plan.rationale,
                        chain=_chain_text(attempt_plan),
                        state_id=state.id,
                        state_hash=state.hash(),
                        parent_state_hash=prev.hash(),
                        score=feedback.score,
                        positive=feedback.positive,
                        negative=feedback.negative,
                        tool_outcome=tool_outcome,
                    )
                )
            decision = should_accept(feedback.score, iterations_used, cfg)
            if decision is Decision.ACCEPT:
                accepted = state
                accepted_score = feedback.score
                break
        accepted_via = ACCEPTED_VIA_THRESHOLD
        if accepted is None:
            chosen = select_best(candidates)
            accepted_score = max(fb.score for _, fb in candidates)
            accepted = runtime.new_state(
                chosen.content, chosen, origin=StateOrigin.FALLBACK_SELECTED
            )
            accepted_via = ACCEPTED_VIA_FALLBACK
        ctx.append_completed(accepted)
        per_turn.append(
            TurnSummary(
                sub_task_index=task.index,
                sub_task=task.text,
                iterations_used=iterations_used,
                accepted_score=accepted_score,
                accepted_via=accepted_via,
            )
        )
        if observers:
            emit(
                TurnCompleted(
                    sub_task_index=task.index,
                    accepted_via=accepted_via,
                    accepted_score=accepted_score,
                    iterations_used=iterations_used,
                    state_id=accepted.id,
                    state_hash=accepted.hash(),
                )
            )
        prev = accepted

    final = ctx.completed[-1]
    result_hash = compute_result_hash(final.hash(), per_turn, attempt_digests)
    if observers:
        emit(
            SessionFinished(
                final_state_id=final.id,
                final_state_hash=final.hash(),
                result_hash=result_hash,
                ledger_totals=tuple((ledger or CostLedger()).phase_totals().items()),
            )
        )
    return SessionResult(
        final=final,
        per_turn=tuple(per_turn),
        ledger=ledger,
        context=ctx,
        result_hash=result_hash,
    )
