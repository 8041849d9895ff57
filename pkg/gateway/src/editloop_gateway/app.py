"""The gateway service: chat, tools, and metrics behind wire envelopes.

Every response body is an envelope `{request_id, payload}` or
`{request_id, error: {code, message}}`, exactly one of the two. Images
travel base64-inline up to a configured cap; larger payloads are written
to a shared directory and returned as path references.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import json
import threading
import uuid
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .adapters import ModelError, StubChat, StubMetrics, StubTools

CHAT_ROLES = ("planner", "orchestrator", "expert", "aggregator")
METRICS = ("dino", "clip_i", "clip_t")

# name -> (parameter -> kind), kinds: image | text | text-list; "?" = optional
TOOL_SIGNATURES: Mapping[str, Mapping[str, str]] = {
    "inpaint": {"image": "image", "mask": "image", "prompt": "text", "negatives": "text-list?"},
    "inpaint_by_adapter": {
        "image": "image", "mask": "image", "prompt": "text",
        "reference": "image", "negatives": "text-list?",
    },
    "edit_by_pipe": {"image": "image", "prompt": "text", "negative_prompt": "text"},
    "edit_by_api": {"image": "image", "prompt": "text", "negative_prompt": "text"},
    "detect_segment": {"image": "image", "target": "text"},
    "retrieve_image": {"target": "text"},
}


class GatewayConfig:
    def __init__(
        self,
        inline_cap_bytes: int = 4 * 1024 * 1024,
        shared_dir: str | Path | None = None,
        max_concurrency: int = 4,
    ):
        self.inline_cap_bytes = inline_cap_bytes
        self.shared_dir = Path(shared_dir) if shared_dir else None
        self.max_concurrency = max_concurrency

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            inline_cap_bytes=int(doc.get("inline_cap_bytes", 4 * 1024 * 1024)),
            shared_dir=doc.get("shared_dir"),
            max_concurrency=int(doc.get("max_concurrency", 4)),
        )


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _envelope(request_id: str, payload: dict[str, Any]) -> dict[str, Any]:
    return {"request_id": request_id, "payload": payload}


def _error_envelope(request_id: str, status: int, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"request_id": request_id, "error": {"code": status, "message": message}},
    )


def _request_id(body: Any) -> str:
    if isinstance(body, dict) and isinstance(body.get("request_id"), str):
        return body["request_id"]
    return uuid.uuid4().hex


def _decode_b64_image(value: Any, field: str) -> bytes:
    if not isinstance(value, str) or not value:
        raise ApiError(422, f"{field} must be a base64 string")
    try:
        return base64.b64decode(value.encode("ascii"), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ApiError(422, f"{field} is not valid base64: {exc}") from exc


def create_app(config: GatewayConfig | None = None) -> FastAPI:
    cfg = config or GatewayConfig()
    chat, tools, metrics = StubChat(), StubTools(), StubMetrics()
    gate = threading.Semaphore(cfg.max_concurrency)
    app = FastAPI(title="editloop gateway")

    def image_ref(data: bytes) -> dict[str, Any]:
        encoded = base64.b64encode(data).decode("ascii")
        if len(encoded) <= cfg.inline_cap_bytes or cfg.shared_dir is None:
            return {"b64": encoded}
        cfg.shared_dir.mkdir(parents=True, exist_ok=True)
        path = cfg.shared_dir / f"{uuid.uuid4().hex}.png"
        path.write_bytes(data)
        return {"path": str(path)}

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error_envelope(uuid.uuid4().hex, 422, str(exc.errors()[:2]))

    @app.get("/v1/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/v1/chat")
    async def chat_endpoint(request: Request):
        body = await request.json()
        request_id = _request_id(body)
        try:
            role = body.get("role")
            if role not in CHAT_ROLES:
                raise ApiError(404, f"unknown backend role: {role!r}")
            prompt = body.get("prompt")
            if not isinstance(prompt, str) or not prompt.strip():
                raise ApiError(400, "prompt must be a non-empty string")
            images = [
                _decode_b64_image(img, f"images[{i}]")
                for i, img in enumerate(body.get("images") or [])
            ]
            with gate:
                try:
                    text = chat.complete(role, prompt, images)
                except ModelError as exc:
                    raise ApiError(502, str(exc)) from exc
            words_in = len(prompt.split())
            words_out = len(text.split())
            return _envelope(
                request_id,
                {
                    "text": text,
                    "usage": {"input_tokens": words_in, "output_tokens": words_out},
                    "latency_ms": 0.0,
                },
            )
        except ApiError as exc:
            return _error_envelope(request_id, exc.status, exc.message)

    @app.post("/v1/tools/{name}")
    async def tool_endpoint(name: str, request: Request):
        body = await request.json()
        request_id = _request_id(body)
        try:
            signature = TOOL_SIGNATURES.get(name)
            if signature is None:
                raise ApiError(404, f"unknown tool: {name!r}")
            args = _validated_tool_args(name, signature, body)
            with gate:
                try:
                    payload = _run_tool(tools, name, args, image_ref)
                except ModelError as exc:
                    raise ApiError(502, str(exc)) from exc
            return _envelope(request_id, payload)
        except ApiError as exc:
            return _error_envelope(request_id, exc.status, exc.message)

    @app.post("/v1/metrics")
    async def metrics_endpoint(request: Request):
        body = await request.json()
        request_id = _request_id(body)
        try:
            metric = body.get("metric")
            if metric not in METRICS:
                raise ApiError(422, f"metric must be one of {METRICS}")
            caption = body.get("caption")
            if metric == "clip_t" and not caption:
                raise ApiError(422, "clip_t requires a caption")
            reference = _decode_b64_image(body.get("reference"), "reference")
            candidate = _decode_b64_image(body.get("candidate"), "candidate")
            with gate:
                try:
                    score = metrics.score(metric, reference, candidate, caption)
                except ModelError as exc:
                    raise ApiError(502, str(exc)) from exc
            return _envelope(request_id, {"score": score})
        except ApiError as exc:
            return _error_envelope(request_id, exc.status, exc.message)

    return app


def _validated_tool_args(
    name: str, signature: Mapping[str, str], body: Mapping[str, Any]
) -> dict[str, Any]:
    args: dict[str, Any] = {}
    for param, kind in signature.items():
        optional = kind.endswith("?")
        kind = kind.rstrip("?")
        if param not in body or body[param] is None:
            if optional:
                continue
            raise ApiError(422, f"{name} is missing required argument {param!r}")
        value = body[param]
        if kind == "image":
            args[param] = _decode_b64_image(value, param)
        elif kind == "text":
            if not isinstance(value, str):
                raise ApiError(422, f"{param} must be a string")
            args[param] = value
        elif kind == "text-list":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ApiError(422, f"{param} must be a list of strings")
            args[param] = value
    known = set(signature) | {"request_id"}
    unknown = set(body) - known
    if unknown:
        raise ApiError(422, f"{name} got unknown arguments: {sorted(unknown)}")
    return args


def _run_tool(tools: StubTools, name: str, args: dict[str, Any], image_ref) -> dict[str, Any]:
    if name in ("edit_by_pipe", "edit_by_api"):
        out = tools.edit(args["image"], args["prompt"], args["negative_prompt"])
        return {"image": image_ref(out)}
    if name == "inpaint":
        out = tools.inpaint(args["image"], args["mask"], args["prompt"], args.get("negatives"))
        return {"image": image_ref(out)}
    if name == "inpaint_by_adapter":
        out = tools.inpaint_by_adapter(
            args["image"], args["mask"], args["prompt"], args["reference"], args.get("negatives")
        )
        return {"image": image_ref(out)}
    if name == "retrieve_image":
        return {"image": image_ref(tools.retrieve(args["target"]))}
    if name == "detect_segment":
        record = tools.detect(args["image"], args["target"])
        return {
            "record": {
                "target_box": record["target_box"],
                "maxscore": record["maxscore"],
                "box_image": image_ref(record["box_image"]),
                "original_mask": image_ref(record["original_mask"]),
                "white_mask": image_ref(record["white_mask"]),
                "cutout_image": image_ref(record["cutout_image"]),
            }
        }
    raise ApiError(404, f"unknown tool: {name!r}")


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="editloop-gateway")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8900)
    parser.add_argument("--config", default=None)
    args = parser.parse_args(argv)
    config = GatewayConfig.from_file(args.config) if args.config else GatewayConfig()
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
