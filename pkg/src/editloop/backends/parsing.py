"""Parsers for the structured regions of noisy model output.

All parsers are lenient-scan/strict-validate: they locate the first
well-formed structured region anywhere in the text (models wrap answers
in prose), then reject it if mandatory content is missing or empty.
"""

from __future__ import annotations

import json
from typing import Any, Iterator

from ..core import Critique
from ..errors import ParseFailure

SCORE_MIN = 0.0
SCORE_MAX = 10.0


def _scan_quoted(text: str, i: int) -> tuple[str, int] | None:
    """Parse a double-quoted string starting at text[i]; returns (value, next)."""
    if i >= len(text) or text[i] != '"':
        return None
    out: list[str] = []
    i += 1
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"n": "\n", "t": "\t", "r": "\r"}.get(nxt, nxt))
            i += 2
            continue
        if c == '"':
            return "".join(out), i + 1
        out.append(c)
        i += 1
    return None


def _scan_string_array(text: str, start: int) -> list[str] | None:
    """Parse an array of double-quoted strings at text[start] ('[').

    Grammar: '[' ws (string (ws ',' ws string)* ws ','? ws)? ']' where ws
    includes newlines. Returns None when the region is not well-formed.
    """
    i = start + 1
    items: list[str] = []
    n = len(text)

    def skip_ws(j: int) -> int:
        while j < n and text[j].isspace():
            j += 1
        return j

    i = skip_ws(i)
    if i < n and text[i] == "]":
        return items
    while True:
        i = skip_ws(i)
        scanned = _scan_quoted(text, i)
        if scanned is None:
            return None
        value, i = scanned
        items.append(value)
        i = skip_ws(i)
        if i >= n:
            return None
        if text[i] == "]":
            return items
        if text[i] != ",":
            return None
        i = skip_ws(i + 1)
        if i < n and text[i] == "]":  # trailing comma tolerated
            return items


def parse_string_array(text: str) -> list[str]:
    """Extract the first well-formed bracketed array of double-quoted strings.

    Surrounding prose and newlines between elements are tolerated. Every
    element must be non-empty after trimming.
    """
    for pos, char in enumerate(text):
        if char != "[":
            continue
        items = _scan_string_array(text, pos)
        if items is None:
            continue
        empties = [k for k, item in enumerate(items) if not item.strip()]
        if empties:
            raise ParseFailure(f"array element {empties[0]} is empty")
        return items
    raise ParseFailure("no well-formed string array found")


def _balanced_braces(text: str, start: int) -> str | None:
    """Return the balanced {...} region beginning at text[start], if any."""
    depth = 0
    in_str = False
    escaped = False
    for i in range(start, len(text)):
        c = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == '"':
                in_str = False
            continue
        if c == '"':
            in_str = True
        elif c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def iter_json_objects(text: str) -> Iterator[dict[str, Any]]:
    """Yield each JSON object found by balanced-brace scanning, in order."""
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        region = _balanced_braces(text, start)
        if region is not None:
            try:
                obj = json.loads(region)
            except json.JSONDecodeError:
                obj = None
            if isinstance(obj, dict):
                yield obj
                pos = start + len(region)
                continue
        pos = start + 1


def _coerce_score(value: Any) -> float:
    if isinstance(value, bool):
        raise ParseFailure("score is not numeric")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError as exc:
            raise ParseFailure(f"score is not numeric: {value!r}") from exc
    raise ParseFailure("score is not numeric")


def _coerce_text(value: Any, key: str) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    raise ParseFailure(f"{key} is not a string")


def parse_critique(text: str) -> Critique:
    """Extract score / negative_prompt / positive_prompt from model output.

    The first well-formed object carrying all three keys wins; decoy
    objects in surrounding prose are skipped. A negative of "None" maps to
    the empty string; out-of-range scores are clamped to [0, 10] with the
    clamp recorded on the critique. The expert id is attached by the
    caller.
    """
    for obj in iter_json_objects(text):
        if {"score", "negative_prompt", "positive_prompt"} - set(obj):
            continue
        score = _coerce_score(obj["score"])
        clamped = not (SCORE_MIN <= score <= SCORE_MAX)
        score = min(max(score, SCORE_MIN), SCORE_MAX)
        negative = _coerce_text(obj["negative_prompt"], "negative_prompt")
        if negative.strip().lower() == "none":
            negative = ""
        positive = _coerce_text(obj["positive_prompt"], "positive_prompt")
        return Critique(
            expert_id="",
            positive=positive,
            negative=negative,
            score=score,
            score_clamped=clamped,
        )
    raise ParseFailure("no well-formed critique object found")


def parse_consensus_text(text: str) -> str:
    """Extract the single `prompt` field from the aggregator's output."""
    for obj in iter_json_objects(text):
        if "prompt" in obj:
            return _coerce_text(obj["prompt"], "prompt")
    raise ParseFailure("no well-formed consensus object found")


def format_string_array(items: list[str]) -> str:
    """Canonical serializer for string arrays; inverse of parse_string_array."""
    return json.dumps(items)
