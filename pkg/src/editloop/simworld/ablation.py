"""Matched-seed benchmark: the closed-loop controller against linear execution.

Both variants run the identical task list with identical fault streams;
the only difference is the iteration budget (linear gets exactly one
attempt, so reflection can never trigger a retry). Success is
goal-satisfaction of the turn's final state; collateral damage is the
count of unrelated changes surviving in it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from ..backends.base import BackendHub
from ..backends.templates import builtin_templates
from ..core import Instruction, SessionConfig, StateOrigin, VisualState
from ..loop import SessionResult, run_session
from .agents import AGGREGATOR_ID, EXPERT_ID, ORCHESTRATOR_ID, PLANNER_ID, rule_backends
from .goals import EditCommand, format_command, goal_satisfied, unrelated_changes
from .scene import COLORS, REGIONS, SIZES, FaultProfile, Scene, SceneObject
from .tools import SimWorld

VARIANT_CLOSED = "closed_loop"
VARIANT_LINEAR = "linear"
VARIANTS = (VARIANT_CLOSED, VARIANT_LINEAR)

_CATEGORIES = (
    "dog", "cat", "tree", "car", "house", "bird", "flower", "chair", "table",
    "lamp", "socket", "cloud", "sun", "hat", "cup", "ball", "book", "fence",
    "rock", "boat",
)
_BACKGROUNDS = (
    "park", "beach", "room", "street", "forest", "kitchen", "desert", "mountain",
)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    tasks: int
    success_rate: float
    mean_unintended: float
    mean_iterations: float


@dataclass(frozen=True)
class AblationTable:
    rows: tuple[AblationRow, ...]

    def row(self, variant: str) -> AblationRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def as_tsv(self) -> str:
        header = "variant\ttasks\tsuccess_rate\tmean_unintended\tmean_iterations"
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.variant}\t{r.tasks}\t{r.success_rate:.4f}"
                f"\t{r.mean_unintended:.4f}\t{r.mean_iterations:.4f}"
            )
        return "\n".join(lines) + "\n"


def generate_case(rng: random.Random) -> tuple[Scene, EditCommand]:
    """One satisfiable task: a populated scene plus a canonical edit."""
    count = rng.randint(3, 6)
    categories = rng.sample(_CATEGORIES, count)
    objects = tuple(
        SceneObject(
            f"o{i + 1}", category, rng.choice(COLORS), rng.choice(REGIONS),
            rng.choice(SIZES),
        )
        for i, category in enumerate(categories)
    )
    scene = Scene(objects, background=rng.choice(_BACKGROUNDS))
    kind = rng.choice(("added", "removed", "recolored", "background_changed", "moved"))
    if kind == "added":
        absent = [c for c in _CATEGORIES if c not in categories]
        cmd = EditCommand(
            "added", rng.choice(absent), color=rng.choice(COLORS),
            region=rng.choice(REGIONS),
        )
    elif kind == "removed":
        cmd = EditCommand("removed", rng.choice(categories))
    elif kind == "recolored":
        victim = objects[rng.randrange(len(objects))]
        new_color = rng.choice([c for c in COLORS if c != victim.color])
        cmd = EditCommand("recolored", victim.category, value=new_color)
    elif kind == "moved":
        victim = objects[rng.randrange(len(objects))]
        new_region = rng.choice([r for r in REGIONS if r != victim.region])
        cmd = EditCommand("moved", victim.category, value=new_region)
    else:
        new_bg = rng.choice([b for b in _BACKGROUNDS if b != scene.background])
        cmd = EditCommand("background_changed", "background", value=new_bg)
    return scene, cmd


def simworld_config(
    variant: str,
    success_threshold: float = 7.0,
    max_iterations: int = 3,
    panel: Sequence[str] = (EXPERT_ID,),
) -> SessionConfig:
    return SessionConfig(
        success_threshold=success_threshold,
        max_iterations=1 if variant == VARIANT_LINEAR else max_iterations,
        expert_panel=tuple(panel),
        aggregator=AGGREGATOR_ID,
        planner=PLANNER_ID,
        orchestrator=ORCHESTRATOR_ID,
    )


def verify_context_accounting(result: SessionResult, task_count: int) -> None:
    """One attempt record per iteration, one completed state per sub-task."""
    attempts = len(result.context.attempts)
    expected = sum(t.iterations_used for t in result.per_turn)
    if attempts != expected:
        raise AssertionError(f"attempt records {attempts} != iterations {expected}")
    if len(result.context.completed) != task_count:
        raise AssertionError(
            f"completed states {len(result.context.completed)} != tasks {task_count}"
        )


def run_ablation(
    profile: FaultProfile,
    n_tasks: int,
    variants: Sequence[str] = VARIANTS,
    success_threshold: float = 7.0,
    max_iterations: int = 3,
    check_accounting: bool = True,
) -> AblationTable:
    """Run every task under every variant with matched fault streams."""
    templates = builtin_templates()
    hub = BackendHub(rule_backends())
    case_rng = random.Random(f"cases:{profile.seed}")
    cases = [generate_case(case_rng) for _ in range(n_tasks)]
    configs = {
        variant: simworld_config(variant, success_threshold, max_iterations)
        for variant in variants
    }

    rows = []
    for variant in variants:
        cfg = configs[variant]
        successes = 0
        unintended_total = 0
        iterations_total = 0
        for case_index, (scene, cmd) in enumerate(cases):
            world = SimWorld(
                profile, rng=random.Random(f"fault:{profile.seed}:{case_index}")
            )
            initial = VisualState(
                id="initial", content=scene, origin=StateOrigin.INITIAL,
                width=scene.width, height=scene.height,
            )
            result = run_session(
                initial,
                Instruction(format_command(cmd)),
                cfg,
                world.registry(),
                hub,
                templates=templates,
            )
            if check_accounting:
                verify_context_accounting(result, task_count=1)
            goal = cmd.goal()
            final_scene = result.final.content
            if goal_satisfied(scene, final_scene, goal):
                successes += 1
            unintended_total += len(unrelated_changes(scene, final_scene, goal))
            iterations_total += result.per_turn[0].iterations_used
        rows.append(
            AblationRow(
                variant=variant,
                tasks=n_tasks,
                success_rate=successes / n_tasks if n_tasks else 0.0,
                mean_unintended=unintended_total / n_tasks if n_tasks else 0.0,
                mean_iterations=iterations_total / n_tasks if n_tasks else 0.0,
            )
        )
    return AblationTable(rows=tuple(rows))
