"""Model-call abstraction: templates, parsers, transports, offline doubles."""

from .base import (
    Backend,
    BackendCall,
    BackendHub,
    BackendRequest,
    BackendResponse,
    TokenUsage,
)
from .parsing import (
    format_string_array,
    parse_consensus_text,
    parse_critique,
    parse_string_array,
)
from .scripted import (
    FakeClock,
    RuleBackend,
    ScriptedBackend,
    TimeoutBackend,
    UnavailableBackend,
)
from .templates import PromptTemplate, TemplateName, builtin_templates, load_template, render

__all__ = [
    "Backend",
    "BackendCall",
    "BackendHub",
    "BackendRequest",
    "BackendResponse",
    "FakeClock",
    "PromptTemplate",
    "RuleBackend",
    "ScriptedBackend",
    "TemplateName",
    "TimeoutBackend",
    "TokenUsage",
    "UnavailableBackend",
    "builtin_templates",
    "format_string_array",
    "load_template",
    "parse_consensus_text",
    "parse_critique",
    "parse_string_array",
    "render",
]
