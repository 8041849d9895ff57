"""Exact scoring of simulated edits against their goal predicate.

The rubric mirrors the expert panel's locality rule: full marks only when
the goal holds and nothing outside it changed; one unrelated change costs
half; a missed goal scores zero.
"""

from __future__ import annotations

from ..core import Critique
from .goals import GoalPredicate, goal_satisfied, unrelated_changes
from .scene import Scene

SCORE_EXACT = 10.0
SCORE_COLLATERAL = 5.0
SCORE_MISS = 0.0


def _positive_text(goal: GoalPredicate) -> str:
    verb = {
        "added": f"add the {goal.target}",
        "removed": f"remove the {goal.target}",
        "recolored": f"make the {goal.target} {goal.attribute}",
        "background_changed": f"set the background to {goal.attribute}",
        "moved": f"move the {goal.target} to {goal.attribute}",
    }[goal.kind]
    return f"{verb} while keep other unchanged"


def oracle_critique(pre: Scene, post: Scene, goal: GoalPredicate) -> Critique:
    """Score 10 / 5 / 0 per the locality rubric; texts come from the diff."""
    satisfied = goal_satisfied(pre, post, goal)
    unrelated = unrelated_changes(pre, post, goal)
    if satisfied and not unrelated:
        return Critique(
            expert_id="oracle",
            positive=_positive_text(goal),
            negative="",
            score=SCORE_EXACT,
        )
    if satisfied and len(unrelated) == 1:
        return Critique(
            expert_id="oracle",
            positive=_positive_text(goal),
            negative=unrelated[0],
            score=SCORE_COLLATERAL,
        )
    negative = "; ".join(unrelated) if unrelated else "edit not applied"
    if not satisfied:
        negative = "edit not applied" if not unrelated else negative
    return Critique(
        expert_id="oracle",
        positive=_positive_text(goal),
        negative=negative,
        score=SCORE_MISS,
    )
