"""Registry contents, chain grammar, validation, and execution semantics."""

from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from editloop.backends.base import BackendHub
from editloop.backends.scripted import RuleBackend, ScriptedBackend
from editloop.core import (
    AttemptRecord,
    ConsensusFeedback,
    SessionContext,
    SubTask,
    ToolInvocation,
    VisualState,
)
from editloop.costing import CostLedger, PricingTable
from editloop.errors import PlanInvalid, PlanParseFailure, ToolFailure
from editloop.orchestrator import (
    CostClass,
    SessionStateFactory,
    default_registry,
    execute,
    negative_prompt_accumulate,
    orchestrate,
    parse_chain_text,
    validate_chain,
)
from editloop.simworld.ablation import generate_case
from editloop.simworld.scene import FaultProfile, Scene
from editloop.simworld.tools import SimWorld

from conftest import TEMPLATES, initial_state, make_scene


@pytest.fixture
def registry():
    return SimWorld(FaultProfile(0.0, 0.0, seed=3)).registry()


class TestDefaultRegistry:
    def test_exactly_six_public_tools(self):
        registry = default_registry()
        assert len(registry) == 6
        assert sorted(registry.public_names()) == [
            "detect_segment", "edit_by_api", "edit_by_pipe",
            "inpaint", "inpaint_by_adapter", "retrieve_image",
        ]

    def test_cloud_editor_is_cloud_class(self):
        registry = default_registry()
        assert registry.schema("edit_by_api").cost_class is CostClass.CLOUD
        assert registry.schema("edit_by_pipe").cost_class is CostClass.LOCAL

    def test_unknown_name_absent(self):
        registry = default_registry()
        assert registry.schema("imagine") is None
        assert "imagine" not in registry

    def test_internal_utility_resolvable_but_uncounted(self):
        registry = default_registry()
        assert "draw_box" in registry
        assert "draw_box" not in registry.public_names()

    def test_unwired_tool_fails_loudly(self):
        registry = default_registry()
        invocations, result, _ = parse_chain_text(
            'out = retrieve_image(target="steel")\nreturn $out'
        )
        validate_chain(invocations, result, registry)
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        with pytest.raises(ToolFailure):
            execute(plan, initial_state(make_scene(("dog", "brown", "center"))), registry)


class TestChainParsing:
    def test_two_step_chain(self):
        text = (
            "Reasoning first.\n```toolchain\n"
            'det = detect_segment(image=$input, target="socket")\n'
            'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the socket")\n'
            "return $out\n```\ntrailing note"
        )
        invocations, result, rationale = parse_chain_text(text)
        assert [i.tool_name for i in invocations] == ["detect_segment", "inpaint"]
        assert result == "out"
        assert "Reasoning first." in rationale and "trailing note" in rationale
        assert "toolchain" not in rationale

    def test_unfenced_chain_accepted_with_empty_rationale(self):
        invocations, result, rationale = parse_chain_text(
            'out = edit_by_pipe(image=$input, prompt="x", negative_prompt="")\nreturn $out'
        )
        assert result == "out"
        assert rationale == ""

    def test_list_and_number_literals(self):
        invocations, _, _ = parse_chain_text(
            'a = inpaint(image=$input, mask=$input, prompt="p", negatives=["n1", "n2"])\n'
            'b = draw_box(image=$a, box="1,2,3,4", width=5)\nreturn $b'
        )
        args = invocations[0].arg_map()
        assert args["negatives"] == ("n1", "n2")
        assert invocations[1].arg_map()["width"] == 5

    def test_missing_return_rejected(self):
        with pytest.raises(PlanParseFailure):
            parse_chain_text('out = retrieve_image(target="x")')

    def test_no_invocations_rejected(self):
        with pytest.raises(PlanParseFailure):
            parse_chain_text("return $out")

    def test_garbage_rejected(self):
        with pytest.raises(PlanParseFailure):
            parse_chain_text("I would simply edit the image nicely.")

    def test_second_fenced_block_tried_when_first_is_prose(self):
        text = (
            "```\nnot a chain\n```\nmiddle\n```toolchain\n"
            'out = retrieve_image(target="x")\nreturn $out\n```'
        )
        invocations, result, rationale = parse_chain_text(text)
        assert result == "out"
        assert "not a chain" in rationale  # the prose block stays rationale


class TestChainValidation:
    def _validate(self, registry, text):
        invocations, result, _ = parse_chain_text(text)
        validate_chain(invocations, result, registry)

    def test_valid_reference_chain(self, registry):
        self._validate(
            registry,
            'det = detect_segment(image=$input, target="socket")\n'
            'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove")\n'
            "return $out",
        )

    def test_undefined_binding_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(
                registry,
                'out = inpaint(image=$input, mask=$x, prompt="p")\nreturn $out',
            )

    def test_unknown_tool_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(registry, 'out = imagine(image=$input)\nreturn $out')

    def test_missing_required_arg_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(registry, 'out = edit_by_pipe(image=$input, prompt="p")\nreturn $out')

    def test_unknown_arg_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(
                registry, 'out = retrieve_image(target="x", extra="y")\nreturn $out'
            )

    def test_text_where_mask_expected_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(
                registry,
                'out = inpaint(image=$input, mask="not a mask", prompt="p")\nreturn $out',
            )

    def test_detection_record_cannot_be_result(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(
                registry, 'det = detect_segment(image=$input, target="x")\nreturn $det'
            )

    def test_field_reference_on_non_record_rejected(self, registry):
        with pytest.raises(PlanInvalid):
            self._validate(
                registry,
                'a = retrieve_image(target="x")\n'
                'out = inpaint(image=$input, mask=$a.original_mask, prompt="p")\n'
                "return $out",
            )


class TestExecute:
    def test_detect_then_inpaint_removes_the_socket(self, registry):
        scene = make_scene(("dog", "brown", "center"), ("socket", "gray", "bottom-right"))
        invocations, result, _ = parse_chain_text(
            'det = detect_segment(image=$input, target="socket")\n'
            'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the socket")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        out = execute(plan, initial_state(scene), registry)
        assert isinstance(out.content, Scene)
        assert out.content.count("socket") == 0  # oracle predicate
        assert out.content.count("dog") == 1

    def test_identity_chain_content_equal(self, registry):
        scene = make_scene(("dog", "brown", "center"))
        invocations, result, _ = parse_chain_text(
            'out = draw_box(image=$input, box="0,0,10,10")\nreturn $out'
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        state = initial_state(scene)
        out = execute(plan, state, registry)
        assert out.hash() == state.hash()
        assert out.id != state.id

    def test_detect_absent_target_fails_not_found(self, registry):
        invocations, result, _ = parse_chain_text(
            'det = detect_segment(image=$input, target="unicorn")\n'
            'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the unicorn")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        with pytest.raises(ToolFailure) as err:
            execute(plan, initial_state(make_scene(("dog", "brown", "center"))), registry)
        assert err.value.tool == "detect_segment"
        assert "NotFound" in err.value.cause

    def test_execute_is_deterministic(self):
        scene = make_scene(("dog", "brown", "center"), ("cat", "white", "top-left"))
        invocations, result, _ = parse_chain_text(
            'out = edit_by_pipe(image=$input, prompt="remove the dog", negative_prompt="")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        for seed in (4, 99):
            outcomes = set()
            for _ in range(3):
                registry = SimWorld(FaultProfile(0.5, 0.5, seed=seed)).registry()
                try:
                    outcomes.add(execute(plan, initial_state(scene), registry).hash())
                except ToolFailure as exc:
                    outcomes.add(f"failure:{exc.tool}:{exc.cause}")
            assert len(outcomes) == 1, outcomes

    def test_no_invocation_outside_chain(self):
        calls: list[str] = []
        world = SimWorld(FaultProfile(0.0, 0.0, seed=1))
        registry = world.registry()
        for name in list(registry.public_names()) + ["draw_box"]:
            impl = registry.impl(name)

            def wrapped(args, runtime, chain_input, _impl=impl, _name=name):
                calls.append(_name)
                return _impl(args, runtime, chain_input)

            registry.bind(name, wrapped)
        scene = make_scene(("dog", "brown", "center"))
        invocations, result, _ = parse_chain_text(
            'a = draw_box(image=$input, box="0,0,4,4")\n'
            'out = edit_by_pipe(image=$a, prompt="remove the dog", negative_prompt="")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        execute(plan, initial_state(scene), registry)
        assert calls == ["draw_box", "edit_by_pipe"]

    def test_tool_calls_land_in_ledger_with_class_and_outcome(self, registry):
        ledger = CostLedger(PricingTable.from_mappings(images={"edit_by_api": 0.029}))
        scene = make_scene(("dog", "brown", "center"))
        invocations, result, _ = parse_chain_text(
            'out = edit_by_api(image=$input, prompt="change the background to forest", negative_prompt="")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        execute(plan, initial_state(scene), registry, ledger=ledger)
        entry = ledger.entries[0]
        assert (entry.phase, entry.source) == ("tool", "edit_by_api")
        assert entry.cost_class == "cloud"
        assert entry.outcome == "ok"
        assert entry.usd_micro == 29_000

    def test_failed_call_recorded_then_raises(self):
        registry = SimWorld(FaultProfile(1.0, 0.0, seed=5)).registry()
        ledger = CostLedger()
        scene = make_scene(("dog", "brown", "center"))
        invocations, result, _ = parse_chain_text(
            'out = edit_by_pipe(image=$input, prompt="remove the dog", negative_prompt="")\n'
            "return $out"
        )
        from editloop.core import OrchestrationPlan

        plan = OrchestrationPlan(1, 0, "", invocations, result)
        with pytest.raises(ToolFailure):
            execute(plan, initial_state(scene), registry, ledger=ledger)
        assert ledger.entries[0].outcome == "failure"


class TestDetectionGeometry:
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_detection_invariants_over_random_scenes(self, seed):
        rng = random.Random(seed)
        scene, _ = generate_case(rng)
        registry = SimWorld(FaultProfile(0.0, 0.0, seed=seed)).registry()
        runtime = SessionStateFactory()
        target = scene.objects[rng.randrange(len(scene.objects))].category
        record = registry.impl("detect_segment")(
            {"image": initial_state(scene), "target": target},
            runtime,
            initial_state(scene),
        )
        x0, y0, x1, y1 = record.target_box
        assert 0 <= x0 < x1 <= scene.width
        assert 0 <= y0 < y1 <= scene.height
        assert 0.0 <= record.maxscore <= 1.0


class TestNegativeAccumulation:
    def _ctx_with_negatives(self, negatives: list[str]) -> SessionContext:
        from editloop.core import OrchestrationPlan, StateOrigin

        ctx = SessionContext(initial_state(make_scene(("dog", "brown", "center"))))
        for k, negative in enumerate(negatives):
            plan = OrchestrationPlan(
                1, k, "",
                (ToolInvocation("edit_by_pipe", (("image", "$input"), ("prompt", "p"), ("negative_prompt", "")), "out"),),
                "out",
            )
            state = VisualState(
                id=f"s{k + 1}", content=b"x", origin=StateOrigin.TOOL_OUTPUT, parent_id="initial"
            )
            ctx.append_attempt(
                AttemptRecord(plan, state, ConsensusFeedback("", negative, 0.0))
            )
        return ctx

    def test_no_prior_attempts_empty(self):
        ctx = SessionContext(initial_state(make_scene(("dog", "brown", "center"))))
        assert negative_prompt_accumulate(ctx, 1) == []

    def test_empties_dropped(self):
        ctx = self._ctx_with_negatives(["sun", ""])
        assert negative_prompt_accumulate(ctx, 1) == ["sun"]

    def test_case_insensitive_dedup_oldest_first(self):
        ctx = self._ctx_with_negatives(["sun", "Sun", "dog"])
        assert negative_prompt_accumulate(ctx, 1) == ["sun", "dog"]

    def test_reference_dedup_oracle(self):
        negatives = ["a", "B", "b", "A", "c", "a", "C"]
        ctx = self._ctx_with_negatives(negatives)
        seen, expected = set(), []
        for negative in negatives:  # independent oracle
            if negative and negative.lower() not in seen:
                seen.add(negative.lower())
                expected.append(negative)
        assert negative_prompt_accumulate(ctx, 1) == expected

    def test_scoped_to_sub_task(self):
        ctx = self._ctx_with_negatives(["sun"])
        assert negative_prompt_accumulate(ctx, 2) == []


class TestOrchestrate:
    def _ctx(self):
        return SessionContext(initial_state(make_scene(("socket", "gray", "center"))))

    def test_scripted_two_step_plan(self, registry):
        reply = (
            "Detect first, then remove.\n```toolchain\n"
            'det = detect_segment(image=$input, target="socket")\n'
            'out = inpaint(image=$input, mask=$det.original_mask, prompt="remove the socket")\n'
            "return $out\n```"
        )
        hub = BackendHub({"orch": ScriptedBackend([reply])})
        plan = orchestrate(
            self._ctx().initial,
            SubTask(index=1, text="remove power sockets"),
            self._ctx(),
            hub,
            "orch",
            registry,
        )
        assert [i.tool_name for i in plan.chain] == ["detect_segment", "inpaint"]
        assert plan.rationale == "Detect first, then remove."
        assert plan.iteration == 0

    def test_single_cloud_call_plan(self, registry):
        reply = (
            "```toolchain\n"
            'out = edit_by_api(image=$input, prompt="change the background to forest", negative_prompt="people changed")\n'
            "return $out\n```"
        )
        hub = BackendHub({"orch": ScriptedBackend([reply])})
        plan = orchestrate(
            self._ctx().initial,
            SubTask(index=1, text="change the background to forest"),
            self._ctx(),
            hub,
            "orch",
            registry,
        )
        assert len(plan.chain) == 1
        assert plan.chain[0].tool_name == "edit_by_api"

    def test_undefined_binding_is_plan_invalid(self, registry):
        reply = "```toolchain\nout = inpaint(image=$input, mask=$x, prompt=\"p\")\nreturn $out\n```"
        hub = BackendHub({"orch": ScriptedBackend([reply, reply])})
        with pytest.raises(PlanInvalid):
            orchestrate(
                self._ctx().initial,
                SubTask(index=1, text="remove the socket"),
                self._ctx(),
                hub,
                "orch",
                registry,
            )

    def test_one_reask_on_unparseable_reply(self, registry):
        good = "```toolchain\nout = retrieve_image(target=\"x\")\nreturn $out\n```"
        backend = ScriptedBackend(["no chain here", good])
        hub = BackendHub({"orch": backend})
        plan = orchestrate(
            self._ctx().initial,
            SubTask(index=1, text="remove the socket"),
            self._ctx(),
            hub,
            "orch",
            registry,
        )
        assert backend.calls_made == 2
        assert plan.chain[0].tool_name == "retrieve_image"

    def test_prompt_carries_negatives_and_digest(self, registry):
        captured = {}

        def rule(request):
            captured["prompt"] = request.prompt
            return "```toolchain\nout = retrieve_image(target=\"x\")\nreturn $out\n```"

        ctx = self._ctx()
        from editloop.core import OrchestrationPlan, StateOrigin

        plan0 = OrchestrationPlan(
            1, 0, "why",
            (ToolInvocation("edit_by_pipe", (("image", "$input"), ("prompt", "p"), ("negative_prompt", "")), "out"),),
            "out",
        )
        ctx.append_attempt(
            AttemptRecord(
                plan0,
                VisualState(id="s1", content=b"x", origin=StateOrigin.TOOL_OUTPUT, parent_id="initial"),
                ConsensusFeedback("good", "halo artifact", 4.0),
            )
        )
        hub = BackendHub({"orch": RuleBackend(rule)})
        plan = orchestrate(
            ctx.initial, SubTask(index=1, text="remove the socket"), ctx, hub, "orch", registry
        )
        assert "halo artifact" in captured["prompt"]  # negatives rendered
        assert "attempt sub_task=1" in captured["prompt"]  # digest rendered
        assert plan.iteration == 1  # one prior attempt
