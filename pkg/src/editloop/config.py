"""Config file loading: session parameters, backend wiring, pricing, world.

One JSON document configures a run:

    {
      "session": {
        "success_threshold": 7,
        "max_iterations": 3,
        "planner": "sim-planner",
        "orchestrator": "sim-orchestrator",
        "expert_panel": ["sim-expert"],
        "aggregator": "sim-aggregator",
        "context_window": null
      },
      "world": {
        "kind": "simworld",
        "fault": {"tool_failure_prob": 0.0, "side_effect_prob": 0.0, "seed": 0}
      },
      "backends": {"kind": "simworld"},
      "pricing": {
        "usd_per_million_tokens": {"planner": 0.23},
        "usd_per_image": {"edit_by_api": 0.029}
      }
    }

Backend wiring is either {"kind": "simworld"} (the offline rule-driven
cast), or a per-id map {"<backend_id>": {"kind": "gateway", "base_url":
..., "role": ..., "token_env": ...}}. API keys are always environment
variable references, never literal values in the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .backends.base import Backend
from .backends.scripted import ScriptedBackend
from .core import SessionConfig, validate_session_config
from .costing import PricingTable
from .errors import ConfigInvalid

WORLD_KINDS = ("simworld", "gateway")


@dataclass(frozen=True)
class RunSetup:
    session: SessionConfig
    backends: dict[str, Backend]
    pricing: PricingTable
    world: dict[str, Any]


def _session_config(doc: Mapping[str, Any]) -> SessionConfig:
    section = doc.get("session")
    if not isinstance(section, Mapping):
        raise ConfigInvalid("session", "missing or not an object")
    try:
        cfg = SessionConfig(
            success_threshold=float(section.get("success_threshold", 7.0)),
            max_iterations=int(section.get("max_iterations", 3)),
            expert_panel=tuple(section.get("expert_panel", ())),
            aggregator=str(section.get("aggregator", "")),
            planner=str(section.get("planner", "")),
            orchestrator=str(section.get("orchestrator", "")),
            context_window=(
                None
                if section.get("context_window") is None
                else int(section["context_window"])
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("session", str(exc)) from exc
    return validate_session_config(cfg)


def _pricing(doc: Mapping[str, Any]) -> PricingTable:
    section = doc.get("pricing", {})
    if not isinstance(section, Mapping):
        raise ConfigInvalid("pricing", "not an object")
    try:
        return PricingTable.from_mappings(
            section.get("usd_per_million_tokens", {}),
            section.get("usd_per_image", {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("pricing", str(exc)) from exc


def _backends(doc: Mapping[str, Any]) -> dict[str, Backend]:
    section = doc.get("backends", {"kind": "simworld"})
    if not isinstance(section, Mapping):
        raise ConfigInvalid("backends", "not an object")
    if section.get("kind") == "simworld":
        from .simworld.agents import rule_backends

        return dict(rule_backends())
    out: dict[str, Backend] = {}
    for backend_id, spec in section.items():
        if not isinstance(spec, Mapping):
            raise ConfigInvalid(f"backends.{backend_id}", "not an object")
        kind = spec.get("kind")
        if kind == "gateway":
            from .backends.remote import GatewayChatBackend

            if "base_url" not in spec:
                raise ConfigInvalid(f"backends.{backend_id}", "missing base_url")
            out[backend_id] = GatewayChatBackend(
                base_url=spec["base_url"],
                role=spec.get("role", backend_id),
                token_env=spec.get("token_env"),
                timeout_s=float(spec.get("timeout_s", 60.0)),
            )
        elif kind == "scripted":
            out[backend_id] = ScriptedBackend(list(spec.get("replies", ())))
        else:
            raise ConfigInvalid(f"backends.{backend_id}", f"unknown kind {kind!r}")
    return out


def _world(doc: Mapping[str, Any]) -> dict[str, Any]:
    section = doc.get("world", {"kind": "simworld", "fault": {}})
    if not isinstance(section, Mapping) or section.get("kind") not in WORLD_KINDS:
        raise ConfigInvalid("world", f"kind must be one of {WORLD_KINDS}")
    return dict(section)


def parse_config(doc: Mapping[str, Any]) -> RunSetup:
    return RunSetup(
        session=_session_config(doc),
        backends=_backends(doc),
        pricing=_pricing(doc),
        world=_world(doc),
    )


def load_config(path: str | Path) -> RunSetup:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid("file", f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("file", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigInvalid("file", "top level must be an object")
    return parse_config(doc)


def fault_profile_from(world: Mapping[str, Any], seed_offset: int = 0):
    from .simworld.scene import FaultProfile

    fault = world.get("fault", {}) or {}
    return FaultProfile(
        tool_failure_prob=float(fault.get("tool_failure_prob", 0.0)),
        side_effect_prob=float(fault.get("side_effect_prob", 0.0)),
        seed=int(fault.get("seed", 0)) + seed_offset,
    )


def load_fault_profile(path: str | Path):
    """Fault-profile files hold just the fault object itself."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid("file", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("file", f"invalid JSON: {exc}") from exc
    return fault_profile_from({"fault": doc})
