"""Editing intents over scenes: the canonical command grammar, goal
predicates for oracle scoring, and the unrelated-change computation.

Canonical command phrasings (one line each):

    add a {color} {category} in {region}
    remove the {category}
    change the color of the {category} to {color}
    change the background to {background}
    move the {category} to {region}
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .scene import Scene, SceneDiff, diff_scenes

KINDS = ("added", "removed", "recolored", "background_changed", "moved")
_ATTRIBUTE_REQUIRED = ("recolored", "background_changed", "moved")


@dataclass(frozen=True)
class GoalPredicate:
    """What one sub-task must make true about the scene."""

    kind: str
    target: str
    attribute: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown goal kind: {self.kind}")
        if self.kind in _ATTRIBUTE_REQUIRED and not self.attribute:
            raise ValueError(f"goal kind {self.kind!r} requires an attribute")


@dataclass(frozen=True)
class EditCommand:
    """A fully specified canonical edit; formats to one instruction line."""

    kind: str
    category: str
    color: str | None = None
    region: str | None = None
    value: str | None = None  # new color / new region / new background

    def goal(self) -> GoalPredicate:
        if self.kind == "added":
            return GoalPredicate("added", self.category)
        if self.kind == "removed":
            return GoalPredicate("removed", self.category)
        if self.kind == "recolored":
            return GoalPredicate("recolored", self.category, self.value)
        if self.kind == "background_changed":
            return GoalPredicate("background_changed", self.category, self.value)
        if self.kind == "moved":
            return GoalPredicate("moved", self.category, self.value)
        raise ValueError(f"unknown command kind: {self.kind}")


def format_command(cmd: EditCommand) -> str:
    if cmd.kind == "added":
        return f"add a {cmd.color} {cmd.category} in {cmd.region}"
    if cmd.kind == "removed":
        return f"remove the {cmd.category}"
    if cmd.kind == "recolored":
        return f"change the color of the {cmd.category} to {cmd.value}"
    if cmd.kind == "background_changed":
        return f"change the background to {cmd.value}"
    if cmd.kind == "moved":
        return f"move the {cmd.category} to {cmd.value}"
    raise ValueError(f"unknown command kind: {cmd.kind}")


_PATTERNS = (
    ("added", re.compile(r"^add a (?P<color>\S+) (?P<category>\S+) in (?P<region>\S+)$")),
    ("removed", re.compile(r"^remove the (?P<category>\S+)$")),
    ("recolored", re.compile(r"^change the color of the (?P<category>\S+) to (?P<value>\S+)$")),
    ("background_changed", re.compile(r"^change the background to (?P<value>\S+)$")),
    ("moved", re.compile(r"^move the (?P<category>\S+) to (?P<value>\S+)$")),
)


def parse_command(text: str) -> EditCommand:
    cleaned = text.strip().rstrip(".").lower()
    for kind, pattern in _PATTERNS:
        m = pattern.fullmatch(cleaned)
        if not m:
            continue
        groups = m.groupdict()
        return EditCommand(
            kind=kind,
            category=groups.get("category", "background"),
            color=groups.get("color"),
            region=groups.get("region"),
            value=groups.get("value"),
        )
    raise ValueError(f"not a canonical edit command: {text!r}")


def goal_satisfied(pre: Scene, post: Scene, goal: GoalPredicate) -> bool:
    if goal.kind == "added":
        return post.count(goal.target) > pre.count(goal.target)
    if goal.kind == "removed":
        return pre.count(goal.target) > 0 and post.count(goal.target) == 0
    if goal.kind == "recolored":
        matching = post.find(goal.target)
        return bool(matching) and all(o.color == goal.attribute for o in matching)
    if goal.kind == "background_changed":
        return post.background == goal.attribute
    if goal.kind == "moved":
        matching = post.find(goal.target)
        return bool(matching) and all(o.region == goal.attribute for o in matching)
    raise ValueError(f"unknown goal kind: {goal.kind}")


def _expected(goal: GoalPredicate, diff: SceneDiff) -> SceneDiff:
    """Split the diff into the part the goal accounts for (dropped) and not."""
    added = diff.added
    removed = diff.removed
    changed = diff.changed
    background_changed = diff.background_changed
    if goal.kind == "added":
        added = tuple(o for o in added if o.category != goal.target)
    elif goal.kind == "removed":
        removed = tuple(o for o in removed if o.category != goal.target)
    elif goal.kind == "recolored":
        changed = tuple(
            c for c in changed if not (c.category == goal.target and c.field == "color")
        )
    elif goal.kind == "moved":
        changed = tuple(
            c for c in changed if not (c.category == goal.target and c.field == "region")
        )
    elif goal.kind == "background_changed":
        background_changed = False
    return SceneDiff(added, removed, changed, background_changed)


def unrelated_changes(pre: Scene, post: Scene, goal: GoalPredicate) -> list[str]:
    """Human-readable labels for every change the goal does not explain."""
    residue = _expected(goal, diff_scenes(pre, post))
    labels = [f"{o.category} added" for o in residue.added]
    labels += [f"{o.category} removed" for o in residue.removed]
    labels += [f"{c.category} {c.field} changed" for c in residue.changed]
    if residue.background_changed:
        labels.append("background changed")
    return labels
