"""Clients for the gateway wire protocol: chat backends and tool calls.

Every gateway response is an envelope carrying a request id and exactly
one of `payload` or `error`. Raster payloads travel base64-inline; the
engine never decodes pixels. Bearer tokens are read from environment
variables named in the config, never stored in files.
"""

from __future__ import annotations

import base64
import os
import uuid
from typing import Any

import httpx

from ..errors import BackendTimeout, BackendUnavailable, ToolFailure
from .base import BackendRequest, BackendResponse, TokenUsage


def _encode_attachment(state: Any) -> str:
    content = state.content
    if not isinstance(content, bytes):
        raise BackendUnavailable(
            "remote backends accept raster states only; "
            f"got {type(content).__name__} content"
        )
    return base64.b64encode(content).decode("ascii")


def _auth_headers(token_env: str | None) -> dict[str, str]:
    if not token_env:
        return {}
    token = os.environ.get(token_env, "")
    return {"Authorization": f"Bearer {token}"} if token else {}


def unwrap_envelope(body: dict[str, Any]) -> dict[str, Any]:
    """Return the payload of a wire envelope or raise on its error."""
    payload = body.get("payload")
    error = body.get("error")
    if (payload is None) == (error is None):
        raise BackendUnavailable("malformed envelope: need exactly one of payload/error")
    if error is not None:
        raise BackendUnavailable(f"gateway error {error.get('code')}: {error.get('message')}")
    return payload


class GatewayChatBackend:
    """POST /v1/chat for one named backend role."""

    def __init__(
        self,
        base_url: str,
        role: str,
        token_env: str | None = None,
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.role = role
        self.token_env = token_env
        self._client = client or httpx.Client(timeout=timeout_s)

    def invoke(self, request: BackendRequest) -> BackendResponse:
        payload: dict[str, Any] = {
            "request_id": uuid.uuid4().hex,
            "role": self.role,
            "prompt": request.prompt,
            "images": [_encode_attachment(s) for s in request.attachments],
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        try:
            response = self._client.post(
                f"{self.base_url}/v1/chat",
                json=payload,
                headers=_auth_headers(self.token_env),
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise BackendUnavailable(
                f"gateway chat returned {response.status_code}: {response.text[:200]}"
            )
        body = unwrap_envelope(response.json())
        usage = body.get("usage")
        return BackendResponse(
            text=body["text"],
            token_usage=(
                TokenUsage(usage["input_tokens"], usage["output_tokens"])
                if usage
                else None
            ),
            latency_ms=float(body.get("latency_ms", 0.0)),
        )


class GatewayToolClient:
    """POST /v1/tools/{name}; used by gateway-backed tool implementations."""

    def __init__(
        self,
        base_url: str,
        token_env: str | None = None,
        timeout_s: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.token_env = token_env
        self._client = client or httpx.Client(timeout=timeout_s)

    def call(self, name: str, payload: dict[str, Any]) -> dict[str, Any]:
        body = {"request_id": uuid.uuid4().hex, **payload}
        try:
            response = self._client.post(
                f"{self.base_url}/v1/tools/{name}",
                json=body,
                headers=_auth_headers(self.token_env),
            )
        except httpx.TimeoutException as exc:
            raise ToolFailure(name, f"timeout: {exc}") from exc
        except httpx.HTTPError as exc:
            raise ToolFailure(name, str(exc)) from exc
        doc = _json_or_none(response)
        if response.status_code != 200:
            message = ""
            if doc and doc.get("error"):
                message = doc["error"].get("message", "")
            raise ToolFailure(
                name, f"gateway returned {response.status_code}: {message or response.text[:200]}"
            )
        try:
            return unwrap_envelope(doc or {})
        except BackendUnavailable as exc:
            raise ToolFailure(name, str(exc)) from exc

    @staticmethod
    def encode_image(content: bytes) -> str:
        return base64.b64encode(content).decode("ascii")

    @staticmethod
    def decode_image(data: str) -> bytes:
        return base64.b64decode(data.encode("ascii"))


def _json_or_none(response: httpx.Response) -> dict[str, Any] | None:
    try:
        return response.json()
    except ValueError:
        return None


def _image_ref_bytes(ref: dict[str, Any]) -> bytes:
    """Decode an image reference: inline base64 or a shared-volume path."""
    if "b64" in ref:
        return GatewayToolClient.decode_image(ref["b64"])
    if "path" in ref:
        with open(ref["path"], "rb") as fh:
            return fh.read()
    raise ToolFailure("gateway", f"unusable image reference: {sorted(ref)}")


def gateway_tool_impls(client: GatewayToolClient):
    """Registry implementations that forward every tool to the gateway."""
    from ..orchestrator import DetectionRecord

    def state_b64(value: Any) -> str:
        return _encode_attachment(value)

    def wire_args(args: dict[str, Any]) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in args.items():
            if hasattr(value, "content"):
                out[key] = state_b64(value)
            elif isinstance(value, tuple):
                out[key] = list(value)
            else:
                out[key] = value
        return out

    def image_tool(name: str):
        def impl(args: dict[str, Any], runtime, chain_input):
            payload = client.call(name, wire_args(args))
            parent = args.get("image", chain_input)
            return runtime.new_state(_image_ref_bytes(payload["image"]), parent=parent)

        return impl

    def detect_impl(args: dict[str, Any], runtime, chain_input):
        payload = client.call("detect_segment", wire_args(args))
        record = payload["record"]
        parent = args.get("image", chain_input)

        def sub_state(key: str):
            return runtime.new_state(_image_ref_bytes(record[key]), parent=parent)

        return DetectionRecord(
            target_box=tuple(record["target_box"]),
            maxscore=record["maxscore"],
            box_image=sub_state("box_image"),
            original_mask=sub_state("original_mask"),
            white_mask=sub_state("white_mask"),
            cutout_image=sub_state("cutout_image"),
        )

    def draw_box_impl(args: dict[str, Any], runtime, chain_input):
        # Engine-internal annotation; the engine never decodes pixels, and
        # downstream edits name the region in their prompt anyway.
        image = args["image"]
        return runtime.new_state(image.content, parent=image)

    return {
        "inpaint": image_tool("inpaint"),
        "inpaint_by_adapter": image_tool("inpaint_by_adapter"),
        "edit_by_pipe": image_tool("edit_by_pipe"),
        "edit_by_api": image_tool("edit_by_api"),
        "detect_segment": detect_impl,
        "retrieve_image": image_tool("retrieve_image"),
        "draw_box": draw_box_impl,
    }
