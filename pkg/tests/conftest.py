"""Shared fixtures: scenes, scripted casts, and a scripted-score harness."""

from __future__ import annotations

import json

import pytest

from editloop.backends.base import BackendHub
from editloop.backends.parsing import format_string_array
from editloop.backends.scripted import RuleBackend, ScriptedBackend
from editloop.backends.templates import builtin_templates
from editloop.core import Instruction, SessionConfig, StateOrigin, VisualState
from editloop.loop import run_session
from editloop.simworld.scene import FaultProfile, Scene, SceneObject
from editloop.simworld.tools import SimWorld

TEMPLATES = builtin_templates()


@pytest.fixture(scope="session")
def templates():
    return TEMPLATES


def make_scene(*objects: tuple[str, str, str], background: str = "park") -> Scene:
    """(category, color, region) triples; sizes default to medium."""
    return Scene(
        tuple(
            SceneObject(f"o{i + 1}", category, color, region, "medium")
            for i, (category, color, region) in enumerate(objects)
        ),
        background=background,
    )


@pytest.fixture
def park_scene() -> Scene:
    return make_scene(
        ("dog", "brown", "center"),
        ("tree", "green", "top-left"),
        ("socket", "gray", "bottom-right"),
    )


def initial_state(scene: Scene) -> VisualState:
    return VisualState(
        id="initial", content=scene, origin=StateOrigin.INITIAL,
        width=scene.width, height=scene.height,
    )


def critique_json(score: float, negative: str = "None", positive: str = "ok") -> str:
    return json.dumps(
        {"score": score, "negative_prompt": negative, "positive_prompt": positive}
    )


NOOP_CHAIN = 'out = draw_box(image=$input, box="0,0,1,1")\nreturn $out'


def noop_orchestrator() -> RuleBackend:
    return RuleBackend(lambda req: "annotate only\n```toolchain\n" + NOOP_CHAIN + "\n```")


def echo_aggregator() -> RuleBackend:
    def rule(req):
        raw = req.binding_map().get("feedback_items", "[]")
        inner = raw[1:-1] if raw.startswith("[") else raw
        return json.dumps({"prompt": inner})

    return RuleBackend(rule)


def scripted_score_session(
    scores: list[float],
    n_tasks: int = 1,
    success_threshold: float = 7.0,
    max_iterations: int = 3,
    scene: Scene | None = None,
):
    """Run a session whose expert scores replay from a flat stream.

    The orchestrator always emits a no-op annotation chain over a fault-free
    world, so scores alone drive every accept/retry/fallback decision.
    """
    scene = scene or make_scene(("dog", "brown", "center"))
    cfg = SessionConfig(
        success_threshold=success_threshold,
        max_iterations=max_iterations,
        expert_panel=("expert",),
        aggregator="agg",
        planner="planner",
        orchestrator="orch",
    )
    tasks = [f"task {i + 1}" for i in range(n_tasks)]
    backends = {
        "planner": ScriptedBackend([format_string_array(tasks)]),
        "orch": noop_orchestrator(),
        "expert": ScriptedBackend([critique_json(s) for s in scores]),
        "agg": echo_aggregator(),
    }
    hub = BackendHub(backends)
    world = SimWorld(FaultProfile(0.0, 0.0, seed=0))
    return run_session(
        initial_state(scene),
        Instruction(". ".join(tasks)),
        cfg,
        world.registry(),
        hub,
        templates=TEMPLATES,
    )
