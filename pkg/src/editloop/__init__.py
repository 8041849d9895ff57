"""editloop: closed-loop orchestration for multi-turn image editing.

One session turns an instruction into accepted edits through a fixed
pipeline: decompose into atomic sub-tasks, orchestrate a tool-chain per
attempt, execute it, score the candidate with an expert panel, and either
accept, retry with the panel's negatives, or fall back to the best prior
candidate.
"""

from .core import (
    AttemptRecord,
    ConsensusFeedback,
    Critique,
    Instruction,
    OrchestrationPlan,
    SessionConfig,
    SessionContext,
    StateOrigin,
    SubTask,
    ToolInvocation,
    VisualState,
    validate_session_config,
)

__version__ = "0.1.0"

__all__ = [
    "AttemptRecord",
    "ConsensusFeedback",
    "Critique",
    "Instruction",
    "OrchestrationPlan",
    "SessionConfig",
    "SessionContext",
    "StateOrigin",
    "SubTask",
    "ToolInvocation",
    "VisualState",
    "validate_session_config",
    "__version__",
]
