"""The engine driving the gateway end to end: chains and a full session."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from editloop.backends.base import BackendHub
from editloop.backends.remote import (
    GatewayChatBackend,
    GatewayToolClient,
    gateway_tool_impls,
)
from editloop.core import Instruction, OrchestrationPlan, SessionConfig, StateOrigin, VisualState
from editloop.errors import ToolFailure
from editloop.loop import run_session
from editloop.orchestrator import default_registry, execute, parse_chain_text

from conftest import encode

BASE_URL = "http://testserver"


@pytest.fixture()
def tool_registry(client: TestClient):
    tool_client = GatewayToolClient(BASE_URL, client=client)
    return default_registry(gateway_tool_impls(tool_client))


def _raster_state(data: bytes) -> VisualState:
    return VisualState(id="initial", content=data, origin=StateOrigin.INITIAL)


def test_detect_then_inpaint_chain_over_gateway(tool_registry, image_fixture):
    invocations, result, _ = parse_chain_text(
        'det = detect_segment(image=$input, target="red square")\n'
        'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the red square")\n'
        "return $out"
    )
    plan = OrchestrationPlan(1, 0, "", invocations, result)
    out = execute(plan, _raster_state(image_fixture["base"]), tool_registry)
    assert isinstance(out.content, bytes)
    assert out.content != image_fixture["base"]
    assert out.parent_id == "initial"


def test_chain_failure_maps_to_tool_failure(tool_registry):
    from PIL import Image

    from conftest import png_bytes

    flat = png_bytes(Image.new("RGB", (64, 64), (180, 180, 180)))
    invocations, result, _ = parse_chain_text(
        'det = detect_segment(image=$input, target="cat")\n'
        'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the cat")\n'
        "return $out"
    )
    plan = OrchestrationPlan(1, 0, "", invocations, result)
    with pytest.raises(ToolFailure) as err:
        execute(plan, _raster_state(flat), tool_registry)
    assert err.value.tool == "detect_segment"


def test_full_session_over_gateway_backends(client, tool_registry, image_fixture):
    hub = BackendHub(
        {
            role: GatewayChatBackend(BASE_URL, role=role, client=client)
            for role in ("planner", "orchestrator", "expert", "aggregator")
        }
    )
    cfg = SessionConfig(
        success_threshold=7.0,
        max_iterations=3,
        expert_panel=("expert",),
        aggregator="aggregator",
        planner="planner",
        orchestrator="orchestrator",
    )
    result = run_session(
        _raster_state(image_fixture["base"]),
        Instruction("tint the square green. add a soft vignette"),
        cfg,
        tool_registry,
        hub,
    )
    assert len(result.per_turn) == 2
    for turn in result.per_turn:
        assert turn.accepted_via == "threshold"  # stub expert scores edits 8
    assert isinstance(result.final.content, bytes)
    assert result.final.content != image_fixture["base"]
