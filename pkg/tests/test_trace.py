"""Trace persistence: record structure, replay fidelity, reporting."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from editloop.backends.base import BackendHub
from editloop.backends.parsing import format_string_array
from editloop.backends.scripted import ScriptedBackend
from editloop.core import Instruction, SessionConfig
from editloop.errors import ReplayMismatch, TraceCorrupt
from editloop.loop import run_session
from editloop.simworld.scene import FaultProfile
from editloop.simworld.tools import SimWorld
from editloop.trace import (
    TraceRecorder,
    load_trace,
    replay,
    report,
    world_descriptor_for_scene,
)

from conftest import (
    TEMPLATES,
    critique_json,
    echo_aggregator,
    initial_state,
    make_scene,
    noop_orchestrator,
)


def record_scripted_session(
    path: Path,
    scores: list[float],
    n_tasks: int = 1,
    seed: int = 0,
) -> None:
    """A recorded fault-free session whose verdicts come from scripted scores."""
    scene = make_scene(("dog", "brown", "center"), ("tree", "green", "top-left"))
    fault = FaultProfile(0.0, 0.0, seed=seed)
    world = SimWorld(fault)
    cfg = SessionConfig(
        success_threshold=7.0,
        max_iterations=3,
        expert_panel=("expert",),
        aggregator="agg",
        planner="planner",
        orchestrator="orch",
    )
    tasks = [f"task {i + 1}" for i in range(n_tasks)]
    hub = BackendHub(
        {
            "planner": ScriptedBackend([format_string_array(tasks)]),
            "orch": noop_orchestrator(),
            "expert": ScriptedBackend([critique_json(s) for s in scores]),
            "agg": echo_aggregator(),
        }
    )
    recorder = TraceRecorder(
        path,
        world=world_descriptor_for_scene(scene.canonical_text(), fault),
        created_at=1700000000.0,
    )
    recorder.attach(hub)
    try:
        run_session(
            initial_state(scene), Instruction(". ".join(tasks)), cfg,
            world.registry(), hub, observers=(recorder,), templates=TEMPLATES,
        )
    finally:
        recorder.close()


class TestRecord:
    def test_two_task_session_has_two_turn_blocks(self, tmp_path):
        path = tmp_path / "two.trace"
        record_scripted_session(path, [10, 10], n_tasks=2)
        trace = load_trace(path)
        assert len(trace.events("turn_started")) == 2
        assert len(trace.events("turn_completed")) == 2
        assert trace.complete

    def test_fallback_marked(self, tmp_path):
        path = tmp_path / "fallback.trace"
        record_scripted_session(path, [5, 6, 4])
        trace = load_trace(path)
        completed = trace.events("turn_completed")[0]
        assert completed["accepted_via"] == "fallback"

    def test_interrupted_session_flagged_incomplete(self, tmp_path):
        path = tmp_path / "partial.trace"

        class Killed(RuntimeError):
            pass

        scene = make_scene(("dog", "brown", "center"))
        fault = FaultProfile(0.0, 0.0, seed=0)
        world = SimWorld(fault)
        cfg = SessionConfig(
            success_threshold=7.0, max_iterations=3, expert_panel=("expert",),
            aggregator="agg", planner="planner", orchestrator="orch",
        )
        hub = BackendHub(
            {
                "planner": ScriptedBackend([format_string_array(["task 1"])]),
                "orch": noop_orchestrator(),
                "expert": ScriptedBackend([critique_json(10)]),
                "agg": echo_aggregator(),
            }
        )
        recorder = TraceRecorder(
            path, world=world_descriptor_for_scene(scene.canonical_text(), fault)
        )
        recorder.attach(hub)
        seen = []

        def killer(event):
            seen.append(event.kind())
            if event.kind() == "attempt_scored":
                raise Killed()

        with pytest.raises(Killed):
            try:
                run_session(
                    initial_state(scene), Instruction("task 1"), cfg,
                    world.registry(), hub, observers=(recorder, killer),
                    templates=TEMPLATES,
                )
            finally:
                recorder.close()
        trace = load_trace(path)
        assert not trace.complete
        assert trace.events("attempt_scored")  # got that far, then died
        with pytest.raises(TraceCorrupt):
            replay(path)

    def test_state_hash_chain_present(self, tmp_path):
        path = tmp_path / "chain.trace"
        record_scripted_session(path, [5, 10])
        trace = load_trace(path)
        attempts = trace.events("attempt_scored")
        assert all(a["parent_state_hash"] == trace.initial_state_hash for a in attempts)


class TestReplay:
    def test_roundtrip_matches(self, tmp_path):
        path = tmp_path / "session.trace"
        record_scripted_session(path, [5, 8], seed=9)
        outcome = replay(path)
        assert outcome.result.per_turn[0].iterations_used == 2

    def test_rerecord_is_byte_identical(self, tmp_path):
        path = tmp_path / "session.trace"
        record_scripted_session(path, [5, 6, 4, 10, 2], n_tasks=2, seed=5)
        second = tmp_path / "session2.trace"
        replay(path, rerecord_path=second)
        assert path.read_bytes() == second.read_bytes()

    def test_flipped_score_detected_at_that_record(self, tmp_path):
        path = tmp_path / "session.trace"
        record_scripted_session(path, [5, 8])
        lines = path.read_text().splitlines()
        target = next(
            i for i, line in enumerate(lines)
            if '"kind":"attempt_scored"' in line and '"score":8.0' in line
        )
        lines[target] = lines[target].replace('"score":8.0', '"score":9.0')
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ReplayMismatch) as err:
            replay(path)
        assert err.value.first_divergent_event == target - 1  # header excluded

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "bad.trace"
        record_scripted_session(path, [10])
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        lines[0] = json.dumps(header, separators=(",", ":"), sort_keys=True)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceCorrupt):
            replay(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("")
        with pytest.raises(TraceCorrupt):
            load_trace(path)

    def test_raster_trace_not_replayable(self, tmp_path):
        path = tmp_path / "raster.trace"
        record_scripted_session(path, [10])
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["world"] = {"kind": "raster"}
        lines[0] = json.dumps(header, separators=(",", ":"), sort_keys=True)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceCorrupt):
            replay(path)


class TestReport:
    def test_all_first_attempt(self, tmp_path):
        paths = []
        for k in range(3):
            path = tmp_path / f"t{k}.trace"
            record_scripted_session(path, [10])
            paths.append(path)
        summary = report([load_trace(p) for p in paths])
        assert summary.first_attempt_rate() == 1.0
        assert summary.fallback_rate == 0.0

    def test_scripted_mix_echoed(self, tmp_path):
        # 34 pass@1, 11 pass@2, 3 pass@3, 2 fallback -> 68/22/6/4 percent
        recipes = (
            [([10], 34)] + [([5, 10], 11)] + [([5, 5, 10], 3)] + [([5, 5, 5], 2)]
        )
        paths = []
        counter = 0
        for scores, count in recipes:
            for _ in range(count):
                path = tmp_path / f"mix{counter}.trace"
                record_scripted_session(path, list(scores))
                paths.append(path)
                counter += 1
        summary = report([load_trace(p) for p in paths])
        rates = dict(summary.pass_rates_by_iteration)
        assert rates[1] == pytest.approx(0.68, abs=1e-9)
        assert rates[2] == pytest.approx(0.22, abs=1e-9)
        assert rates[3] == pytest.approx(0.06, abs=1e-9)
        assert summary.fallback_rate == pytest.approx(0.04, abs=1e-9)
        total = sum(rates.values()) + summary.fallback_rate
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            report([])

    def test_report_text_shape(self, tmp_path):
        path = tmp_path / "one.trace"
        record_scripted_session(path, [5, 10])
        text = report([load_trace(path)]).as_text()
        assert "pass@1" in text and "fallback" in text and "mean_cost_usd_per_turn" in text
