"""Deterministic scene-graph world: offline tools, oracle critic, benchmarks."""

from .ablation import (
    AblationRow,
    AblationTable,
    generate_case,
    run_ablation,
    simworld_config,
    verify_context_accounting,
)
from .agents import (
    AGGREGATOR_ID,
    EXPERT_ID,
    ORCHESTRATOR_ID,
    PLANNER_ID,
    rule_backends,
    split_instruction,
)
from .goals import (
    EditCommand,
    GoalPredicate,
    format_command,
    goal_satisfied,
    parse_command,
    unrelated_changes,
)
from .oracle import oracle_critique
from .scene import (
    COLORS,
    REGIONS,
    SIZES,
    FaultProfile,
    Scene,
    SceneMask,
    SceneObject,
    diff_scenes,
    format_scene,
    parse_scene,
)
from .tools import SimWorld, apply_command, sim_tool

__all__ = [
    "AGGREGATOR_ID",
    "AblationRow",
    "AblationTable",
    "COLORS",
    "EXPERT_ID",
    "EditCommand",
    "FaultProfile",
    "GoalPredicate",
    "ORCHESTRATOR_ID",
    "PLANNER_ID",
    "REGIONS",
    "SIZES",
    "Scene",
    "SceneMask",
    "SceneObject",
    "SimWorld",
    "apply_command",
    "diff_scenes",
    "format_command",
    "format_scene",
    "generate_case",
    "goal_satisfied",
    "oracle_critique",
    "parse_command",
    "parse_scene",
    "rule_backends",
    "run_ablation",
    "sim_tool",
    "simworld_config",
    "split_instruction",
    "unrelated_changes",
    "verify_context_accounting",
]
