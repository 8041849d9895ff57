"""Prompt templates: load the shipped assets and render them deterministically.

Template bodies live as text files under editloop/prompts/, one per role.
Placeholders use the ``${name}`` form so literal JSON braces in the bodies
survive untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Mapping

from ..errors import MissingBinding

_PLACEHOLDER_RE = re.compile(r"\$\{([a-z_]+)\}")


class TemplateName(str, Enum):
    PLANNER = "planner"
    ORCHESTRATOR = "orchestrator"
    EXPERT = "expert"
    AGGREGATOR = "aggregator"


@dataclass(frozen=True)
class PromptTemplate:
    """A named template body with ``${placeholder}`` slots."""

    name: TemplateName
    body: str

    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER_RE.findall(self.body))


def _compiled(tpl: PromptTemplate) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split the body once into literal segments and placeholder names."""
    cached = tpl.__dict__.get("_parts")
    if cached is None:
        literals: list[str] = []
        names: list[str] = []
        last = 0
        for m in _PLACEHOLDER_RE.finditer(tpl.body):
            literals.append(tpl.body[last : m.start()])
            names.append(m.group(1))
            last = m.end()
        literals.append(tpl.body[last:])
        cached = (tuple(literals), tuple(names))
        tpl.__dict__["_parts"] = cached
    return cached


def render(tpl: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; identical inputs yield identical bytes.

    Substitution is single-pass: placeholder-like text inside binding
    values is never re-expanded.
    """
    literals, names = _compiled(tpl)
    missing = [n for n in names if n not in bindings]
    if missing:
        raise MissingBinding(sorted(set(missing))[0])
    out: list[str] = []
    for literal, name in zip(literals, names):
        out.append(literal)
        out.append(bindings[name])
    out.append(literals[-1])
    return "".join(out)


def load_template(name: TemplateName | str) -> PromptTemplate:
    name = TemplateName(name)
    body = (
        resources.files("editloop")
        .joinpath("prompts", f"{name.value}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(name=name, body=body)


def builtin_templates() -> dict[TemplateName, PromptTemplate]:
    return {name: load_template(name) for name in TemplateName}
