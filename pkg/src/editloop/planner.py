"""Instruction decomposition into an ordered sequence of atomic sub-tasks.

The backend does the semantic splitting (its prompt carries the three
decomposition rules verbatim); this module adds only structural checks,
dependency inference, duplicate consolidation, and deterministic
reordering. Model output is never silently rewritten beyond that.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .backends.base import BackendHub, BackendRequest
from .backends.parsing import parse_string_array
from .backends.templates import PromptTemplate, TemplateName, load_template, render
from .core import Instruction, SubTask, VisualState
from .errors import DependencyCycle, ParseFailure, PlanEmpty

_WORD_RE = re.compile(r"[a-z0-9']+")

_ARTICLES = frozenset({"a", "an", "the", "some", "this", "that", "these", "those"})
_PRONOUNS = frozenset({"it", "them", "him", "her", "its", "their", "everything", "something"})
_PREPOSITIONS = frozenset({
    "in", "on", "at", "to", "into", "onto", "under", "over", "near", "next",
    "behind", "by", "with", "from", "of", "for", "around", "beside", "above",
    "below", "inside", "outside", "front",
})
_ADD_VERBS = frozenset({"add", "create", "insert", "draw", "generate", "put", "place"})
_EDIT_VERBS = _ADD_VERBS | frozenset({
    "remove", "delete", "erase", "change", "replace", "recolor", "recolour",
    "convert", "move", "turn", "swap", "resize", "enlarge", "shrink", "crop",
    "rotate", "flip", "adjust", "set", "brighten", "darken", "blur", "sharpen",
    "make", "fix",
})
_BARE_ADJECTIVES = frozenset({
    "brighter", "darker", "bigger", "smaller", "larger", "better", "nicer",
    "prettier", "lighter", "sharper", "blurrier", "cleaner",
})
_CONJUNCTION_SPLIT_RE = re.compile(r"\band\b|\bthen\b|;")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _normalize(text: str) -> str:
    return " ".join(_words(text))


@dataclass(frozen=True)
class TaskSequence:
    """The validated decomposition of one instruction."""

    sub_tasks: tuple[SubTask, ...]
    source_instruction: Instruction

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_tasks", tuple(self.sub_tasks))
        if not self.sub_tasks:
            raise ValueError("task sequence must be non-empty")
        for position, task in enumerate(self.sub_tasks, start=1):
            if task.index != position:
                raise ValueError("sub-task indices must be contiguous from 1")

    def __len__(self) -> int:
        return len(self.sub_tasks)

    def __iter__(self):
        return iter(self.sub_tasks)


@dataclass(frozen=True)
class ConstraintWarning:
    """A structural doubt about one sub-task; advisory only."""

    sub_task_index: int
    kind: str  # "singularity" or "perceptibility"
    detail: str


def introduced_entity(text: str) -> str | None:
    """The entity an add/create style task brings into the scene, if any.

    Takes the noun phrase after the verb, articles stripped, cut at the
    first preposition: "add a red dog in the park" introduces "red dog".
    """
    tokens = _words(text)
    if not tokens or tokens[0] not in _ADD_VERBS:
        return None
    phrase: list[str] = []
    for token in tokens[1:]:
        if token in _ARTICLES:
            continue
        if token in _PREPOSITIONS:
            break
        phrase.append(token)
    return " ".join(phrase) or None


def _references(text_norm: str, entity: str) -> bool:
    """Word-boundary containment of the entity phrase, articles ignored."""
    return f" {entity} " in f" {text_norm} " or _head_noun_match(text_norm, entity)


def _head_noun_match(text_norm: str, entity: str) -> bool:
    head = entity.split()[-1]
    return f" {head} " in f" {text_norm} "


def validate_atomicity(seq: TaskSequence) -> list[ConstraintWarning]:
    """Structural warnings only; semantic judgment stays with the backend.

    Flags sub-tasks whose text joins two editing verb phrases with a
    top-level conjunction, and sub-tasks with no concrete noun target.
    """
    warnings: list[ConstraintWarning] = []
    for task in seq.sub_tasks:
        lowered = task.text.lower()
        parts = [p for p in _CONJUNCTION_SPLIT_RE.split(lowered) if p.strip()]
        if len(parts) >= 2:
            verbal = [any(w in _EDIT_VERBS for w in _words(p)) for p in parts]
            if sum(verbal) >= 2:
                warnings.append(
                    ConstraintWarning(
                        task.index,
                        "singularity",
                        "conjunction joins two editing verb phrases",
                    )
                )
        content = [
            w
            for w in _words(task.text)
            if w not in _EDIT_VERBS
            and w not in _ARTICLES
            and w not in _PREPOSITIONS
            and w not in _PRONOUNS
            and w not in _BARE_ADJECTIVES
        ]
        if not content:
            warnings.append(
                ConstraintWarning(
                    task.index, "perceptibility", "no concrete noun target"
                )
            )
    return warnings


def _consolidate_adjacent(texts: list[str]) -> list[str]:
    kept: list[str] = []
    for text in texts:
        if kept and _normalize(kept[-1]) == _normalize(text):
            continue
        kept.append(text)
    return kept


def decide_order(tasks: Sequence[SubTask], source: Instruction) -> TaskSequence:
    """Consolidate duplicates, infer dependency edges, topologically order.

    A task referencing an entity that an add/create task introduces gains
    an edge from that add task. Order is a stable topological sort:
    independent tasks keep their emitted relative order.
    """
    if not tasks:
        raise ValueError("decide_order requires at least one task")
    texts = _consolidate_adjacent([t.text for t in tasks])

    entities = [introduced_entity(text) for text in texts]
    norms = [_normalize(text) for text in texts]
    n = len(texts)
    successors: list[set[int]] = [set() for _ in range(n)]
    indegree = [0] * n
    for a in range(n):
        entity = entities[a]
        if entity is None:
            continue
        for b in range(n):
            if b == a or entities[b] == entity:
                continue
            if _references(norms[b], entity):
                successors[a].add(b)
                indegree[b] += 1

    order: list[int] = []
    ready = sorted(i for i in range(n) if indegree[i] == 0)
    while ready:
        current = ready.pop(0)
        order.append(current)
        released = []
        for succ in successors[current]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                released.append(succ)
        if released:
            ready = sorted(ready + released)
    if len(order) != n:
        stuck = sorted(set(range(n)) - set(order))
        raise DependencyCycle(
            f"circular entity dependencies among tasks: {[texts[i] for i in stuck]}"
        )

    kept_original: list[int] = []
    for i in order:
        if kept_original and _normalize(texts[kept_original[-1]]) == _normalize(texts[i]):
            continue
        kept_original.append(i)
    position_of = {orig: pos for pos, orig in enumerate(kept_original)}

    sub_tasks = []
    for pos, orig in enumerate(kept_original, start=1):
        depends = frozenset(
            position_of[a] + 1
            for a in range(n)
            if orig in successors[a] and a in position_of
        )
        sub_tasks.append(
            SubTask(
                index=pos,
                text=texts[orig],
                depends_on=depends,
                target_hint=entities[orig],
            )
        )
    return TaskSequence(sub_tasks=tuple(sub_tasks), source_instruction=source)


def plan(
    initial: VisualState,
    instruction: Instruction,
    hub: BackendHub,
    planner_id: str,
    template: PromptTemplate | None = None,
) -> TaskSequence:
    """Decompose the instruction against the initial image.

    Renders the planner prompt, invokes the backend (one re-ask on a
    malformed reply), parses the task array, and returns the validated,
    dependency-ordered sequence.
    """
    tpl = template or load_template(TemplateName.PLANNER)
    bindings = {"instruction": instruction.text}
    request = BackendRequest(
        backend_id=planner_id,
        prompt=render(tpl, bindings),
        attachments=(initial,),
        bindings=tuple(bindings.items()),
    )
    response = hub.invoke_with_retry(request, phase="plan")
    try:
        texts = parse_string_array(response.text)
    except ParseFailure:
        response = hub.invoke_with_retry(request, phase="plan")
        texts = parse_string_array(response.text)
    if not texts:
        raise PlanEmpty("planner returned zero sub-tasks")
    tasks = [SubTask(index=i, text=t) for i, t in enumerate(texts, start=1)]
    return decide_order(tasks, source=instruction)
