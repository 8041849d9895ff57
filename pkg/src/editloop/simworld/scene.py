"""Scene-graph stand-ins for images: object lists plus a background noun.

Scenes are immutable; every transformation returns a new scene. The
canonical text form doubles as the fixture file format and the content
bytes the engine hashes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable

COLORS = (
    "red", "orange", "yellow", "green", "blue",
    "purple", "black", "white", "brown", "gray",
)
REGIONS = (
    "top-left", "top-center", "top-right",
    "middle-left", "center", "middle-right",
    "bottom-left", "bottom-center", "bottom-right",
)
SIZES = ("small", "medium", "large")

_SCENE_HEADER = "scene v1"
_OBJECT_RE = re.compile(
    r"^object:\s*(?P<id>\S+)\s+(?P<category>\S+)\s+(?P<color>\S+)"
    r"\s+(?P<region>\S+)\s+(?P<size>\S+)\s*$"
)


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: str
    color: str
    region: str
    size: str

    def __post_init__(self) -> None:
        if self.color not in COLORS:
            raise ValueError(f"unknown color: {self.color}")
        if self.region not in REGIONS:
            raise ValueError(f"unknown region: {self.region}")
        if self.size not in SIZES:
            raise ValueError(f"unknown size: {self.size}")


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    background: str
    width: int = 512
    height: int = 512

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("scene object ids must be unique")

    def find(self, category: str) -> tuple[SceneObject, ...]:
        return tuple(o for o in self.objects if o.category == category)

    def count(self, category: str) -> int:
        return len(self.find(category))

    def next_object_id(self) -> str:
        highest = 0
        for obj in self.objects:
            m = re.fullmatch(r"o(\d+)", obj.id)
            if m:
                highest = max(highest, int(m.group(1)))
        return f"o{highest + 1}"

    def add_object(self, category: str, color: str, region: str, size: str = "medium") -> "Scene":
        new = SceneObject(self.next_object_id(), category, color, region, size)
        return replace(self, objects=(*self.objects, new))

    def remove_category(self, category: str) -> "Scene":
        return replace(
            self, objects=tuple(o for o in self.objects if o.category != category)
        )

    def remove_ids(self, ids: Iterable[str]) -> "Scene":
        drop = set(ids)
        return replace(self, objects=tuple(o for o in self.objects if o.id not in drop))

    def update_object(self, object_id: str, **fields) -> "Scene":
        updated = tuple(
            replace(o, **fields) if o.id == object_id else o for o in self.objects
        )
        return replace(self, objects=updated)

    def with_background(self, background: str) -> "Scene":
        return replace(self, background=background)

    def canonical_text(self) -> str:
        cached = self.__dict__.get("_canonical")
        if cached is None:
            lines = [
                _SCENE_HEADER,
                f"size: {self.width}x{self.height}",
                f"background: {self.background}",
            ]
            for obj in sorted(self.objects, key=lambda o: o.id):
                lines.append(
                    f"object: {obj.id} {obj.category} {obj.color} {obj.region} {obj.size}"
                )
            cached = "\n".join(lines) + "\n"
            self.__dict__["_canonical"] = cached
        return cached

    def canonical_bytes(self) -> bytes:
        return self.canonical_text().encode("utf-8")


@dataclass(frozen=True)
class SceneMask:
    """A selection over scene objects; the simworld analogue of a 0-1 mask."""

    object_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "object_ids", tuple(self.object_ids))

    def canonical_bytes(self) -> bytes:
        return ("mask:" + ",".join(sorted(self.object_ids))).encode("utf-8")


@dataclass(frozen=True)
class FaultProfile:
    """Injectable failure modes for simulated tools."""

    tool_failure_prob: float = 0.0
    side_effect_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.tool_failure_prob <= 1.0):
            raise ValueError("tool_failure_prob outside [0, 1]")
        if not (0.0 <= self.side_effect_prob <= 1.0):
            raise ValueError("side_effect_prob outside [0, 1]")


def parse_scene(text: str) -> Scene:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != _SCENE_HEADER:
        raise ValueError(f"scene file must start with {_SCENE_HEADER!r}")
    width = height = 512
    background = ""
    objects: list[SceneObject] = []
    for line in lines[1:]:
        if line.startswith("size:"):
            m = re.fullmatch(r"size:\s*(\d+)x(\d+)", line)
            if not m:
                raise ValueError(f"malformed size line: {line!r}")
            width, height = int(m.group(1)), int(m.group(2))
        elif line.startswith("background:"):
            background = line.split(":", 1)[1].strip()
        elif line.startswith("object:"):
            m = _OBJECT_RE.fullmatch(line)
            if not m:
                raise ValueError(f"malformed object line: {line!r}")
            objects.append(
                SceneObject(
                    m.group("id"), m.group("category"), m.group("color"),
                    m.group("region"), m.group("size"),
                )
            )
        else:
            raise ValueError(f"unrecognized scene line: {line!r}")
    if not background:
        raise ValueError("scene file is missing a background line")
    return Scene(tuple(objects), background, width, height)


def format_scene(scene: Scene) -> str:
    return scene.canonical_text()


@dataclass(frozen=True)
class FieldChange:
    object_id: str
    category: str
    field: str
    before: str
    after: str


@dataclass(frozen=True)
class SceneDiff:
    added: tuple[SceneObject, ...]
    removed: tuple[SceneObject, ...]
    changed: tuple[FieldChange, ...]
    background_changed: bool

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.changed or self.background_changed)


def diff_scenes(pre: Scene, post: Scene) -> SceneDiff:
    """Exact per-object comparison keyed by object id."""
    pre_by_id = {o.id: o for o in pre.objects}
    post_by_id = {o.id: o for o in post.objects}
    added = tuple(o for o in post.objects if o.id not in pre_by_id)
    removed = tuple(o for o in pre.objects if o.id not in post_by_id)
    changed: list[FieldChange] = []
    for oid, before in pre_by_id.items():
        after = post_by_id.get(oid)
        if after is None:
            continue
        for field_name in ("category", "color", "region", "size"):
            b, a = getattr(before, field_name), getattr(after, field_name)
            if b != a:
                changed.append(FieldChange(oid, before.category, field_name, b, a))
    return SceneDiff(
        added=added,
        removed=removed,
        changed=tuple(changed),
        background_changed=pre.background != post.background,
    )


def region_box(scene: Scene, region: str, size: str) -> tuple[int, int, int, int]:
    """Integer pixel box for an object: its grid cell, inset by its size."""
    row, col = divmod(REGIONS.index(region), 3)
    cell_w, cell_h = scene.width // 3, scene.height // 3
    inset = {"small": 0.35, "medium": 0.2, "large": 0.05}[size]
    x0 = col * cell_w + int(cell_w * inset)
    y0 = row * cell_h + int(cell_h * inset)
    x1 = (col + 1) * cell_w - int(cell_w * inset)
    y1 = (row + 1) * cell_h - int(cell_h * inset)
    return (x0, y0, max(x1, x0 + 1), max(y1, y0 + 1))
