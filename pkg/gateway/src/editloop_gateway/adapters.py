"""Deterministic offline model adapters.

These stand in for the real chat/editing/detection/retrieval/embedding
models behind the same adapter surface the app calls, so the service runs
and its contract is testable with no checkpoint downloads. Which adapter
backs each endpoint is config-driven; production deployments swap these
for real model wrappers.
"""

from __future__ import annotations

import hashlib
import io
import json
import re

import numpy as np
from PIL import Image, ImageDraw


def _unit(text: str) -> float:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _color_for(text: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return (digest[0], digest[1], digest[2])


def decode_image(data: bytes) -> Image.Image:
    return Image.open(io.BytesIO(data)).convert("RGB")


def encode_image(image: Image.Image) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


class ModelError(RuntimeError):
    """Upstream model failure; the app maps this to a 502 envelope."""


# --- chat ---------------------------------------------------------------------


_INSTRUCTION_RE = re.compile(r"User Instruction:\s*(.+)")
_SUBTASK_RE = re.compile(r"Current Sub-task Instruction:\s*(.+)")
_SPLIT_RE = re.compile(r"[.;]| and then ")


class StubChat:
    """Rule-driven completions for the four engine roles."""

    def complete(self, role: str, prompt: str, images: list[bytes]) -> str:
        if role == "planner":
            return self._plan(prompt)
        if role == "orchestrator":
            return self._orchestrate(prompt)
        if role == "expert":
            return self._criticize(images)
        if role == "aggregator":
            return self._aggregate(prompt)
        raise ModelError(f"no completion rule for role {role!r}")

    def _plan(self, prompt: str) -> str:
        m = _INSTRUCTION_RE.search(prompt)
        if not m:
            raise ModelError("planner prompt carried no instruction line")
        pieces = [p.strip() for p in _SPLIT_RE.split(m.group(1)) if p.strip()]
        return json.dumps(pieces or [m.group(1).strip()])

    def _orchestrate(self, prompt: str) -> str:
        m = _SUBTASK_RE.search(prompt)
        if not m:
            raise ModelError("orchestrator prompt carried no sub-task line")
        subtask = m.group(1).strip()
        return (
            "A single cloud edit covers this change.\n```toolchain\n"
            f"out = edit_by_api(image=$input, prompt={json.dumps(subtask)}, "
            'negative_prompt="")\nreturn $out\n```'
        )

    def _criticize(self, images: list[bytes]) -> str:
        if len(images) >= 2 and images[0] == images[1]:
            return json.dumps(
                {
                    "score": 2,
                    "negative_prompt": "no visible change",
                    "positive_prompt": "apply the requested edit visibly",
                }
            )
        return json.dumps(
            {
                "score": 8,
                "negative_prompt": "None",
                "positive_prompt": "keep the edit and leave the rest unchanged",
            }
        )

    def _aggregate(self, prompt: str) -> str:
        start = prompt.rfind("[")
        end = prompt.find("]", start)
        items: list[str] = []
        if start >= 0 and end > start:
            items = [p.strip() for p in prompt[start + 1 : end].split(",") if p.strip()]
        return json.dumps({"prompt": " and ".join(items)})


# --- tools ----------------------------------------------------------------------


class StubTools:
    """Pillow-backed editing/detection/retrieval with fixed seeds."""

    def edit(self, image: bytes, prompt: str, negative: str) -> bytes:
        base = decode_image(image)
        overlay = Image.new("RGB", base.size, _color_for(prompt))
        return encode_image(Image.blend(base, overlay, alpha=0.25))

    def inpaint(
        self, image: bytes, mask: bytes, prompt: str, negatives: list[str] | None = None
    ) -> bytes:
        base = decode_image(image)
        mask_img = decode_image(mask).convert("L")
        if mask_img.size != base.size:
            mask_img = mask_img.resize(base.size)
        fill = Image.new("RGB", base.size, _color_for(prompt))
        return encode_image(Image.composite(fill, base, mask_img.point(lambda v: 255 if v > 127 else 0)))

    def inpaint_by_adapter(
        self,
        image: bytes,
        mask: bytes,
        prompt: str,
        reference: bytes,
        negatives: list[str] | None = None,
    ) -> bytes:
        base = decode_image(image)
        mask_img = decode_image(mask).convert("L")
        if mask_img.size != base.size:
            mask_img = mask_img.resize(base.size)
        ref = decode_image(reference)
        mean_color = tuple(
            int(v) for v in np.asarray(ref, dtype=np.float64).reshape(-1, 3).mean(axis=0)
        )
        fill = Image.new("RGB", base.size, mean_color)
        return encode_image(Image.composite(fill, base, mask_img.point(lambda v: 255 if v > 127 else 0)))

    def detect(self, image: bytes, target: str) -> dict:
        base = decode_image(image)
        pixels = np.asarray(base, dtype=np.int32)
        border = np.concatenate(
            [pixels[0, :, :], pixels[-1, :, :], pixels[:, 0, :], pixels[:, -1, :]]
        )
        background = np.median(border, axis=0)
        distinct = (np.abs(pixels - background).sum(axis=2) > 60)
        if not distinct.any():
            raise ModelError(f"NotFound: no region distinct from background for {target!r}")
        ys, xs = np.nonzero(distinct)
        x0, x1 = int(xs.min()), int(xs.max()) + 1
        y0, y1 = int(ys.min()), int(ys.max()) + 1
        coverage = float(distinct[y0:y1, x0:x1].mean())
        maxscore = round(0.5 + 0.5 * coverage, 4)

        mask = Image.fromarray((distinct * 255).astype(np.uint8), mode="L").convert("RGB")
        white_mask = Image.composite(
            base.convert("L").convert("RGB"),
            Image.new("RGB", base.size, (0, 0, 0)),
            Image.fromarray((distinct * 255).astype(np.uint8), mode="L"),
        )
        cutout = base.copy()
        draw = ImageDraw.Draw(cutout)
        red = Image.new("RGB", base.size, (255, 0, 0))
        cutout = Image.composite(
            red, cutout, Image.fromarray((distinct * 255).astype(np.uint8), mode="L")
        )
        del draw
        return {
            "target_box": [x0, y0, x1, y1],
            "maxscore": min(maxscore, 1.0),
            "box_image": encode_image(base.crop((x0, y0, x1, y1))),
            "original_mask": encode_image(mask),
            "white_mask": encode_image(white_mask),
            "cutout_image": encode_image(cutout),
        }

    def retrieve(self, target: str) -> bytes:
        side = 256
        image = Image.new("RGB", (side, side), _color_for(f"retrieve:{target}"))
        draw = ImageDraw.Draw(image)
        inset = int(side * (0.2 + 0.2 * _unit(target)))
        draw.rectangle(
            (inset, inset, side - inset, side - inset),
            fill=_color_for(f"subject:{target}"),
        )
        return encode_image(image)


# --- metrics ---------------------------------------------------------------------


_COLOR_WORDS = {
    "red": (255, 0, 0), "green": (0, 200, 0), "blue": (0, 0, 255),
    "yellow": (255, 255, 0), "white": (255, 255, 255), "black": (0, 0, 0),
    "orange": (255, 160, 0), "purple": (160, 0, 200), "brown": (150, 90, 40),
    "gray": (128, 128, 128), "grey": (128, 128, 128),
}


def _histogram(image: Image.Image) -> np.ndarray:
    pixels = np.asarray(image.resize((64, 64)), dtype=np.uint8)
    bins = (pixels >> 6).reshape(-1, 3)
    flat = bins[:, 0] * 16 + bins[:, 1] * 4 + bins[:, 2]
    hist = np.bincount(flat, minlength=64).astype(np.float64)
    norm = np.linalg.norm(hist)
    return hist / norm if norm else hist


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


class StubMetrics:
    """Color-distribution embeddings; identity scores exactly 1.0."""

    SELF_SIMILARITY_MAX = 1.0

    def score(self, metric: str, reference: bytes, candidate: bytes, caption: str | None) -> float:
        ref = _histogram(decode_image(reference))
        cand = _histogram(decode_image(candidate))
        if metric in ("dino", "clip_i"):
            return _cosine(ref, cand)
        if metric == "clip_t":
            assert caption is not None
            return self._caption_alignment(caption, cand)
        raise ModelError(f"unknown metric {metric!r}")

    def _caption_alignment(self, caption: str, image_hist: np.ndarray) -> float:
        canvas = Image.new("RGB", (8, 8), (128, 128, 128))
        draw = ImageDraw.Draw(canvas)
        mentioned = [
            color for word, color in _COLOR_WORDS.items() if word in caption.lower()
        ]
        for index, color in enumerate(mentioned[:8]):
            draw.rectangle((index, 0, index + 1, 8), fill=color)
        caption_hist = _histogram(canvas)
        return max(0.0, _cosine(caption_hist, image_hist))
