"""Simulated tool implementations: scene transformations with injected faults.

Every mutating call draws (failure, side-effect) from the world's seeded
stream, so a run is fully determined by (FaultProfile, call order). Draws
happen regardless of the probability values, keeping streams aligned
across profiles that share a seed.
"""

from __future__ import annotations

import hashlib
import random
from typing import Any

from ..core import VisualState
from ..errors import ToolFailure
from ..orchestrator import (
    DetectionRecord,
    ToolRegistry,
    ToolRuntime,
    default_registry,
)
from .goals import EditCommand, parse_command
from .scene import COLORS, REGIONS, FaultProfile, Scene, SceneMask, SceneObject, region_box

DETECT_THRESHOLD = 0.5


def _stable_unit(text: str) -> float:
    """Deterministic value in [0, 1) from text; independent of hash seeding."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def apply_command(scene: Scene, cmd: EditCommand) -> Scene:
    """The fault-free semantics of one canonical edit."""
    if cmd.kind == "added":
        return scene.add_object(cmd.category, cmd.color or "gray", cmd.region or "center")
    if cmd.kind == "removed":
        return scene.remove_category(cmd.category)
    if cmd.kind == "recolored":
        out = scene
        for obj in scene.find(cmd.category):
            out = out.update_object(obj.id, color=cmd.value)
        return out
    if cmd.kind == "moved":
        out = scene
        for obj in scene.find(cmd.category):
            out = out.update_object(obj.id, region=cmd.value)
        return out
    if cmd.kind == "background_changed":
        return scene.with_background(cmd.value or "plain")
    raise ValueError(f"unknown command kind: {cmd.kind}")


def perturb_unrelated(scene: Scene, protected_categories: set[str], rng: random.Random) -> Scene:
    """Damage exactly one thing the edit was not about."""
    victims = [o for o in scene.objects if o.category not in protected_categories]
    if not victims:
        return scene.with_background(scene.background + "-distorted")
    victim = victims[rng.randrange(len(victims))]
    mode = rng.randrange(3)
    if mode == 0:
        choices = [c for c in COLORS if c != victim.color]
        return scene.update_object(victim.id, color=choices[rng.randrange(len(choices))])
    if mode == 1:
        choices = [r for r in REGIONS if r != victim.region]
        return scene.update_object(victim.id, region=choices[rng.randrange(len(choices))])
    return scene.remove_ids([victim.id])


class SimWorld:
    """Owns the fault stream and binds scene-backed tools into a registry."""

    def __init__(self, fault: FaultProfile | None = None, rng: random.Random | None = None):
        self.fault = fault or FaultProfile()
        self._rng = rng if rng is not None else random.Random(self.fault.seed)

    # Draws are unconditional so call streams align across fault profiles.
    def _draw_failure(self) -> bool:
        return self._rng.random() < self.fault.tool_failure_prob

    def _draw_side_effect(self) -> bool:
        return self._rng.random() < self.fault.side_effect_prob

    def registry(self) -> ToolRegistry:
        return default_registry(
            {
                "inpaint": self._inpaint,
                "inpaint_by_adapter": self._inpaint_by_adapter,
                "edit_by_pipe": self._edit,
                "edit_by_api": self._edit,
                "detect_segment": self._detect_segment,
                "retrieve_image": self._retrieve_image,
                "draw_box": self._draw_box,
            }
        )

    @staticmethod
    def _scene_of(state: VisualState, tool: str) -> Scene:
        if not isinstance(state.content, Scene):
            raise ToolFailure(tool, "state does not hold a scene")
        return state.content

    def _mutate(
        self,
        tool: str,
        image: VisualState,
        cmd: EditCommand,
        runtime: ToolRuntime,
        restrict_to: SceneMask | None = None,
    ) -> VisualState:
        scene = self._scene_of(image, tool)
        failed = self._draw_failure()
        side_effect = self._draw_side_effect()
        if failed:
            raise ToolFailure(tool, "injected fault")
        if restrict_to is not None:
            keep = set(restrict_to.object_ids)
            if cmd.kind == "removed":
                targets = [o for o in scene.find(cmd.category) if o.id in keep]
                out = scene.remove_ids([o.id for o in targets])
            else:
                out = scene
                for obj in scene.find(cmd.category):
                    if obj.id not in keep:
                        continue
                    if cmd.kind == "recolored":
                        out = out.update_object(obj.id, color=cmd.value)
                    elif cmd.kind == "moved":
                        out = out.update_object(obj.id, region=cmd.value)
                if cmd.kind in ("added", "background_changed"):
                    out = apply_command(scene, cmd)
        else:
            out = apply_command(scene, cmd)
        if side_effect:
            out = perturb_unrelated(out, {cmd.category}, self._rng)
        return runtime.new_state(out, parent=image)

    def _parse_prompt(self, tool: str, prompt: str) -> EditCommand:
        try:
            return parse_command(prompt)
        except ValueError as exc:
            raise ToolFailure(tool, f"unsupported edit prompt: {prompt!r}") from exc

    def _edit(self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState) -> VisualState:
        cmd = self._parse_prompt("edit", str(args["prompt"]))
        return self._mutate("edit", args["image"], cmd, runtime)

    def _inpaint(self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState) -> VisualState:
        mask = args["mask"].content
        if not isinstance(mask, SceneMask):
            raise ToolFailure("inpaint", "mask state does not hold a mask")
        cmd = self._parse_prompt("inpaint", str(args["prompt"]))
        return self._mutate("inpaint", args["image"], cmd, runtime, restrict_to=mask)

    def _inpaint_by_adapter(
        self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState
    ) -> VisualState:
        self._scene_of(args["reference"], "inpaint_by_adapter")
        return self._inpaint(args, runtime, chain_input)

    def _detect_segment(
        self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState
    ) -> DetectionRecord:
        image: VisualState = args["image"]
        scene = self._scene_of(image, "detect_segment")
        if self._draw_failure():
            raise ToolFailure("detect_segment", "injected fault")
        target = str(args["target"])
        matching = scene.find(target)
        if not matching:
            raise ToolFailure("detect_segment", f"NotFound: no {target!r} in scene")
        best = max(matching, key=lambda o: _stable_unit(f"{o.id}:{o.category}"))
        maxscore = DETECT_THRESHOLD + (1 - DETECT_THRESHOLD) * _stable_unit(
            f"{best.id}:{best.category}:score"
        )
        if maxscore < DETECT_THRESHOLD:
            raise ToolFailure("detect_segment", f"NotFound: confidence {maxscore:.2f}")
        box = region_box(scene, best.region, best.size)
        ids = tuple(o.id for o in matching)
        crop = Scene((best,), scene.background, scene.width, scene.height)
        cutout = scene.update_object(best.id, color="red")
        return DetectionRecord(
            target_box=box,
            maxscore=maxscore,
            box_image=runtime.new_state(crop, parent=image),
            original_mask=runtime.new_state(SceneMask(ids), parent=image),
            white_mask=runtime.new_state(SceneMask(ids), parent=image),
            cutout_image=runtime.new_state(cutout, parent=image),
        )

    def _retrieve_image(
        self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState
    ) -> VisualState:
        target = str(args["target"])
        color = COLORS[int(_stable_unit(f"retrieve:{target}") * len(COLORS))]
        subject = SceneObject("o1", target.lower().split()[-1], color, "center", "medium")
        scene = Scene((subject,), background="plain")
        return runtime.new_state(scene, parent=chain_input)

    def _draw_box(self, args: dict[str, Any], runtime: ToolRuntime, chain_input: VisualState) -> VisualState:
        image: VisualState = args["image"]
        scene = self._scene_of(image, "draw_box")
        return runtime.new_state(scene, parent=image)


def sim_tool(
    name: str,
    args: dict[str, Any],
    scene: Scene,
    fault: FaultProfile,
    rng: random.Random | None = None,
):
    """Run one simulated tool directly over a raw scene.

    Convenience wrapper for tests and harnesses; the registry path goes
    through SimWorld.registry().
    """
    from ..core import StateOrigin
    from ..orchestrator import SessionStateFactory

    world = SimWorld(fault, rng)
    runtime = SessionStateFactory(prefix="sim.")
    state = VisualState(
        id="sim.input", content=scene, origin=StateOrigin.INITIAL,
        width=scene.width, height=scene.height,
    )
    registry = world.registry()
    call_args = dict(args)
    for key, value in call_args.items():
        if isinstance(value, Scene):
            call_args[key] = VisualState(
                id=f"sim.arg.{key}", content=value, origin=StateOrigin.INITIAL,
                width=value.width, height=value.height,
            )
        elif isinstance(value, SceneMask):
            call_args[key] = runtime.new_state(value, parent=state)
    if "image" not in call_args and name != "retrieve_image":
        call_args["image"] = state
    result = registry.impl(name)(call_args, runtime, state)
    if isinstance(result, VisualState):
        return result.content
    return result
