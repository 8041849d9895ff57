"""Shared gateway fixtures: the app client, schema, and a 3-image fixture."""

from __future__ import annotations

import base64
import io
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient
from PIL import Image, ImageDraw

from editloop_gateway import GatewayConfig, create_app

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schemas" / "wire-schema.json"


@pytest.fixture(scope="session")
def wire_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


@pytest.fixture()
def client() -> TestClient:
    return TestClient(create_app())


@pytest.fixture()
def client_with_path_refs(tmp_path) -> TestClient:
    config = GatewayConfig(inline_cap_bytes=64, shared_dir=tmp_path / "shared")
    return TestClient(create_app(config))


def encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def png_bytes(image: Image.Image) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def _red_square() -> bytes:
    image = Image.new("RGB", (128, 128), (255, 255, 255))
    draw = ImageDraw.Draw(image)
    draw.rectangle((32, 32, 96, 96), fill=(220, 30, 30))
    return png_bytes(image)


def _related() -> bytes:
    image = Image.new("RGB", (128, 128), (255, 255, 255))
    draw = ImageDraw.Draw(image)
    draw.rectangle((40, 36, 100, 98), fill=(210, 40, 35))
    return png_bytes(image)


def _unrelated() -> bytes:
    image = Image.new("RGB", (128, 128), (10, 10, 40))
    draw = ImageDraw.Draw(image)
    for x in range(0, 128, 16):
        draw.line((x, 0, x, 128), fill=(30, 60, 200), width=4)
    return png_bytes(image)


@pytest.fixture(scope="session")
def image_fixture() -> dict[str, bytes]:
    """Three images: a subject, a near duplicate, and an unrelated scene."""
    return {"base": _red_square(), "related": _related(), "unrelated": _unrelated()}
