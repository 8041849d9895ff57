"""Multi-expert critique fan-out and deterministic consensus aggregation.

Each panel member sees the pre/post images and the sub-task, independently
emits (positive, negative, score), and the consensus score is the engine-
computed arithmetic mean of the non-abstaining scores. Only the consensus
texts pass through the aggregator backend.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .backends.base import BackendHub, BackendRequest
from .backends.parsing import format_string_array, parse_consensus_text, parse_critique
from .backends.templates import PromptTemplate, TemplateName, load_template, render
from .core import ConsensusFeedback, Critique, SubTask, VisualState, mean_score
from .errors import AllExpertsAbstained, EditLoopError, NoCritiques, ParseFailure

_FALLBACK_JOINER = "; "


@dataclass(frozen=True)
class ReflectionRequest:
    """What one expert judges: the edit's before/after and its instruction."""

    pre: VisualState
    post: VisualState
    task: SubTask

    def __post_init__(self) -> None:
        if self.pre.id == self.post.id:
            raise ValueError("pre and post states must differ")


def _abstained(expert_id: str) -> Critique:
    return Critique(expert_id=expert_id, positive="", negative="", score=0.0, abstained=True)


def _ask_expert(
    req: ReflectionRequest,
    hub: BackendHub,
    expert_id: str,
    tpl: PromptTemplate,
) -> Critique:
    bindings = {"subtask": req.task.text}
    request = BackendRequest(
        backend_id=expert_id,
        prompt=render(tpl, bindings),
        attachments=(req.pre, req.post),
        bindings=tuple(bindings.items()),
    )
    for _ in range(2):  # one re-ask on any failure, then abstain
        try:
            response = hub.invoke(request, phase="reflect")
            parsed = parse_critique(response.text)
        except (ParseFailure, EditLoopError):
            continue
        return dataclasses.replace(parsed, expert_id=expert_id)
    return _abstained(expert_id)


def critique_panel(
    req: ReflectionRequest,
    hub: BackendHub,
    panel: Sequence[str],
    template: PromptTemplate | None = None,
) -> list[Critique]:
    """One critique per panel member, in panel order, fanned out concurrently.

    An expert that fails twice (transport or malformed output) abstains.
    If every expert abstains the attempt is unscoreable and the caller
    decides what that means.
    """
    if not panel:
        raise ValueError("expert panel must be non-empty")
    tpl = template or load_template(TemplateName.EXPERT)
    if len(panel) == 1:
        critiques = [_ask_expert(req, hub, panel[0], tpl)]
    else:
        with ThreadPoolExecutor(max_workers=len(panel)) as pool:
            futures = [
                pool.submit(_ask_expert, req, hub, expert_id, tpl) for expert_id in panel
            ]
            critiques = [f.result() for f in futures]
    if all(c.abstained for c in critiques):
        raise AllExpertsAbstained(f"all {len(panel)} experts abstained")
    return critiques


def _summarize(
    texts: list[str],
    hub: BackendHub,
    aggregator_id: str,
    tpl: PromptTemplate,
) -> str:
    """Merge feedback texts via the aggregator backend, twice before fallback."""
    if not texts:
        return ""
    if len(texts) == 1:
        return texts[0]
    bindings = {"feedback_items": "[" + ",".join(texts) + "]"}
    request = BackendRequest(
        backend_id=aggregator_id,
        prompt=render(tpl, bindings),
        bindings=tuple(bindings.items()),
    )
    for _ in range(2):
        try:
            response = hub.invoke(request, phase="reflect")
            return parse_consensus_text(response.text)
        except (ParseFailure, EditLoopError):
            continue
    return _FALLBACK_JOINER.join(texts)


def aggregate(
    critiques: Sequence[Critique],
    hub: BackendHub,
    aggregator_id: str,
    panel_order: Sequence[str] | None = None,
    template: PromptTemplate | None = None,
) -> ConsensusFeedback:
    """Fuse raw critiques into the consensus triplet.

    The score is the engine-computed mean of non-abstaining scores; the
    positive/negative texts go through the aggregator backend, presented
    in panel-config order so the result is permutation invariant.
    """
    contributing = [c for c in critiques if not c.abstained]
    if not contributing:
        raise NoCritiques("aggregate requires at least one non-abstaining critique")
    if panel_order:
        rank = {expert_id: k for k, expert_id in enumerate(panel_order)}
        contributing.sort(key=lambda c: rank.get(c.expert_id, len(rank)))
    score = mean_score(contributing)
    tpl = template or load_template(TemplateName.AGGREGATOR)
    positives = [c.positive.strip() for c in contributing if c.positive.strip()]
    negatives = [c.negative.strip() for c in contributing if c.negative.strip()]
    return ConsensusFeedback(
        positive=_summarize(positives, hub, aggregator_id, tpl),
        negative=_summarize(negatives, hub, aggregator_id, tpl),
        score=score,
        contributing_expert_ids=tuple(c.expert_id for c in contributing),
    )
