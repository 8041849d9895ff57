"""Rule-driven backends for fully offline sessions.

These speak the exact wire formats the real backends would (string
arrays, fenced tool-chains, critique JSON), so the whole parsing path is
exercised with no language model anywhere.
"""

from __future__ import annotations

import json

from ..backends.base import BackendRequest
from ..backends.parsing import format_string_array, parse_string_array
from ..backends.scripted import RuleBackend
from ..errors import ParseFailure
from .goals import format_command, parse_command
from .oracle import oracle_critique
from .scene import Scene

PLANNER_ID = "sim-planner"
ORCHESTRATOR_ID = "sim-orchestrator"
EXPERT_ID = "sim-expert"
AGGREGATOR_ID = "sim-aggregator"


def split_instruction(text: str) -> list[str]:
    """Break a multi-edit instruction into canonical command lines."""
    parts: list[str] = []
    for chunk in text.replace(";", ".").split("."):
        for piece in chunk.split(" and then "):
            piece = piece.strip()
            if piece:
                parts.append(piece)
    return parts


def _plan_rule(request: BackendRequest) -> str:
    instruction = request.binding_map().get("instruction", request.prompt)
    return format_string_array(split_instruction(instruction))


def _chain_for(subtask: str, negatives: list[str]) -> str:
    cmd = parse_command(subtask)
    if cmd.kind == "removed":
        lines = [
            f'det = detect_segment(image=$input, target="{cmd.category}")',
            f'out = inpaint(image=$input, mask=$det.original_mask, '
            f'prompt="remove the {cmd.category}", negatives={json.dumps(negatives)})',
            "return $out",
        ]
        rationale = (
            f"Locate the {cmd.category} first so only its region is touched, "
            "then remove it within the mask."
        )
    elif cmd.kind == "background_changed":
        lines = [
            f"out = edit_by_api(image=$input, prompt={json.dumps(format_command(cmd))}, "
            f"negative_prompt={json.dumps('; '.join(negatives))})",
            "return $out",
        ]
        rationale = "A global background swap needs the stronger cloud editor."
    else:
        lines = [
            f"out = edit_by_pipe(image=$input, prompt={json.dumps(format_command(cmd))}, "
            f"negative_prompt={json.dumps('; '.join(negatives))})",
            "return $out",
        ]
        rationale = "A single local edit covers this change."
    return rationale + "\n```toolchain\n" + "\n".join(lines) + "\n```"


def _orchestrate_rule(request: BackendRequest) -> str:
    bindings = request.binding_map()
    subtask = bindings.get("subtask", "")
    try:
        negatives = parse_string_array(bindings.get("negatives", "[]"))
    except ParseFailure:
        negatives = []
    return _chain_for(subtask, negatives)


def _expert_rule(request: BackendRequest) -> str:
    bindings = request.binding_map()
    goal = parse_command(bindings["subtask"]).goal()
    pre, post = request.attachments[0].content, request.attachments[1].content
    if not isinstance(pre, Scene) or not isinstance(post, Scene):
        raise ValueError("oracle expert needs scene states")
    critique = oracle_critique(pre, post, goal)
    return json.dumps(
        {
            "score": critique.score,
            "negative_prompt": critique.negative or "None",
            "positive_prompt": critique.positive,
        }
    )


def _aggregate_rule(request: BackendRequest) -> str:
    raw = request.binding_map().get("feedback_items", "[]").strip()
    inner = raw[1:-1] if raw.startswith("[") and raw.endswith("]") else raw
    items = [part.strip() for part in inner.split(",") if part.strip()]
    return json.dumps({"prompt": " and ".join(items)})


def rule_backends() -> dict[str, RuleBackend]:
    """The standard offline cast, keyed by the ids sessions configure."""
    return {
        PLANNER_ID: RuleBackend(_plan_rule),
        ORCHESTRATOR_ID: RuleBackend(_orchestrate_rule),
        EXPERT_ID: RuleBackend(_expert_rule),
        AGGREGATOR_ID: RuleBackend(_aggregate_rule),
    }
