"""Session trace persistence: record, replay, and summary reporting.

A trace is line-delimited JSON: one header object, then one record per
backend call or progress event. It is self-contained for replay: every
backend raw output is stored, and the simulated world is reconstructible
from the header, so a recorded session re-runs without any live backend.

Backend calls from the concurrent reflection fan-out are buffered and
flushed in (backend id, per-backend sequence) order at each event
boundary, so the file's byte layout is deterministic and replay can
compare traces byte for byte. Wall-clock timestamps live only in the
header and are inherited on re-record, never hashed or compared.
"""

from __future__ import annotations

import io
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence, TextIO

from .backends.base import BackendCall, BackendHub, BackendResponse, TokenUsage
from .backends.scripted import ScriptedBackend
from .core import Instruction, SessionConfig, StateOrigin, VisualState
from .costing import CostLedger, PricingTable
from .errors import IoFailure, ReplayMismatch, TraceCorrupt
from .events import SessionEvent, SessionFinished, SessionStarted
from .loop import SessionResult, run_session

TRACE_VERSION = 1

WORLD_SIMWORLD = "simworld"
WORLD_RASTER = "raster"


def world_descriptor_for_scene(scene_text: str, fault: "Any") -> dict[str, Any]:
    return {
        "kind": WORLD_SIMWORLD,
        "scene": scene_text,
        "fault": {
            "tool_failure_prob": fault.tool_failure_prob,
            "side_effect_prob": fault.side_effect_prob,
            "seed": fault.seed,
        },
    }


class TraceRecorder:
    """Observer + backend-call listener that streams one trace file.

    Attach to the session's hub (for raw model outputs) and pass as an
    observer to run_session (for progress events). The header line is
    written when the session starts; close() must run even on failure so
    partial traces stay readable.
    """

    def __init__(
        self,
        sink: str | Path | TextIO,
        world: dict[str, Any],
        pricing: PricingTable | None = None,
        created_at: float | None = None,
    ):
        if isinstance(sink, (str, Path)):
            try:
                self._fh: TextIO = open(sink, "w", encoding="utf-8")
            except OSError as exc:
                raise IoFailure(f"cannot open trace file {sink}: {exc}") from exc
            self._owns_fh = True
        else:
            self._fh = sink
            self._owns_fh = False
        self._world = world
        self._pricing = pricing or PricingTable()
        self._created_at = created_at if created_at is not None else time.time()
        self._pending: list[tuple[str, int, BackendCall]] = []
        self._seq: dict[str, int] = {}
        self._lock = threading.Lock()
        self._header_written = False
        self._closed = False

    def attach(self, hub: BackendHub) -> None:
        hub.add_listener(self.on_backend_call)

    def on_backend_call(self, call: BackendCall) -> None:
        with self._lock:
            seq = self._seq.get(call.backend_id, 0)
            self._seq[call.backend_id] = seq + 1
            self._pending.append((call.backend_id, seq, call))

    def _flush_pending(self) -> None:
        with self._lock:
            pending = sorted(self._pending, key=lambda item: (item[0], item[1]))
            self._pending.clear()
        for backend_id, seq, call in pending:
            usage = call.response.token_usage
            self._write(
                {
                    "kind": "backend_call",
                    "backend_id": backend_id,
                    "seq": seq,
                    "phase": call.phase,
                    "prompt_hash": call.prompt_hash,
                    "text": call.response.text,
                    "input_tokens": usage.input_tokens if usage else None,
                    "output_tokens": usage.output_tokens if usage else None,
                    "latency_ms": call.response.latency_ms,
                }
            )

    def _write(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, separators=(",", ":"), sort_keys=True)
        self._fh.write(line + "\n")
        self._fh.flush()

    def __call__(self, event: SessionEvent) -> None:
        if isinstance(event, SessionStarted) and not self._header_written:
            self._write(
                {
                    "kind": "header",
                    "version": TRACE_VERSION,
                    "created_at": self._created_at,
                    "world": self._world,
                    "instruction": event.instruction,
                    "config": {k: v for k, v in event.config},
                    "pricing": {
                        "usd_per_million_tokens": dict(
                            self._pricing.usd_per_million_tokens
                        ),
                        "usd_per_image": dict(self._pricing.usd_per_image),
                    },
                    "initial_state_id": event.initial_state_id,
                    "initial_state_hash": event.initial_state_hash,
                }
            )
            self._header_written = True
            return
        self._flush_pending()
        record = {"kind": event.kind()}
        record.update(event.payload())
        self._write(record)

    def close(self) -> None:
        if self._closed:
            return
        self._flush_pending()
        if self._owns_fh:
            self._fh.close()
        self._closed = True


@dataclass(frozen=True)
class SessionTrace:
    """A loaded trace: the header plus every record line, in file order."""

    version: int
    created_at: float
    world: dict[str, Any]
    instruction: str
    config: dict[str, Any]
    pricing: dict[str, Any]
    initial_state_id: str
    initial_state_hash: str
    records: tuple[dict[str, Any], ...]
    raw_lines: tuple[str, ...]  # non-header lines, exact bytes
    complete: bool

    def backend_calls(self) -> list[dict[str, Any]]:
        return [r for r in self.records if r["kind"] == "backend_call"]

    def events(self, kind: str | None = None) -> list[dict[str, Any]]:
        out = [r for r in self.records if r["kind"] != "backend_call"]
        if kind is not None:
            out = [r for r in out if r["kind"] == kind]
        return out

    def finished(self) -> dict[str, Any] | None:
        ends = self.events("session_finished")
        return ends[-1] if ends else None

    def session_config(self) -> SessionConfig:
        cfg = self.config
        return SessionConfig(
            success_threshold=cfg["success_threshold"],
            max_iterations=cfg["max_iterations"],
            expert_panel=tuple(cfg["expert_panel"]),
            aggregator=cfg["aggregator"],
            planner=cfg["planner"],
            orchestrator=cfg["orchestrator"],
            context_window=cfg.get("context_window"),
        )

    def pricing_table(self) -> PricingTable:
        return PricingTable.from_mappings(
            self.pricing.get("usd_per_million_tokens", {}),
            self.pricing.get("usd_per_image", {}),
        )


def load_trace(path: str | Path) -> SessionTrace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read trace file {path}: {exc}") from exc
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise TraceCorrupt("empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceCorrupt(f"unreadable header: {exc}") from exc
    if header.get("kind") != "header":
        raise TraceCorrupt("first record is not a header")
    if header.get("version") != TRACE_VERSION:
        raise TraceCorrupt(f"unsupported trace version: {header.get('version')!r}")
    records: list[dict[str, Any]] = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceCorrupt(f"unreadable record on line {i}: {exc}") from exc
    complete = any(r.get("kind") == "session_finished" for r in records)
    return SessionTrace(
        version=header["version"],
        created_at=header["created_at"],
        world=header["world"],
        instruction=header["instruction"],
        config=header["config"],
        pricing=header.get("pricing", {}),
        initial_state_id=header["initial_state_id"],
        initial_state_hash=header["initial_state_hash"],
        records=tuple(records),
        raw_lines=tuple(lines[1:]),
        complete=complete,
    )


def _scripted_backends_from(trace: SessionTrace) -> dict[str, ScriptedBackend]:
    by_backend: dict[str, list[BackendResponse]] = {}
    for call in trace.backend_calls():
        usage = None
        if call["input_tokens"] is not None:
            usage = TokenUsage(call["input_tokens"], call["output_tokens"])
        by_backend.setdefault(call["backend_id"], []).append(
            BackendResponse(
                text=call["text"],
                token_usage=usage,
                latency_ms=call["latency_ms"],
            )
        )
    return {bid: ScriptedBackend(replies) for bid, replies in by_backend.items()}


def _world_from(trace: SessionTrace):
    from .simworld.scene import FaultProfile, parse_scene
    from .simworld.tools import SimWorld

    world = trace.world
    if world.get("kind") != WORLD_SIMWORLD:
        raise TraceCorrupt(
            f"replay supports simworld traces only, not {world.get('kind')!r}"
        )
    scene = parse_scene(world["scene"])
    fault = FaultProfile(
        tool_failure_prob=world["fault"]["tool_failure_prob"],
        side_effect_prob=world["fault"]["side_effect_prob"],
        seed=world["fault"]["seed"],
    )
    initial = VisualState(
        id=trace.initial_state_id,
        content=scene,
        origin=StateOrigin.INITIAL,
        width=scene.width,
        height=scene.height,
    )
    return SimWorld(fault).registry(), initial


@dataclass(frozen=True)
class ReplayOutcome:
    """Returned only when the replay matched the recording everywhere."""

    result: SessionResult
    recorded_result_hash: str
    rerecorded_lines: tuple[str, ...]


def replay(path: str | Path, rerecord_path: str | Path | None = None) -> ReplayOutcome:
    """Re-run a recorded session from its stored raw outputs and verify it.

    Scripted backends are rebuilt from the trace, the simulated world from
    the header, and the controller runs again. Any divergence from the
    recorded record stream raises ReplayMismatch naming the first
    divergent record.
    """
    trace = load_trace(path)
    if not trace.complete:
        raise TraceCorrupt("trace is incomplete (no session_finished record)")
    finished = trace.finished()
    assert finished is not None
    registry, initial = _world_from(trace)
    hub = BackendHub(_scripted_backends_from(trace))
    ledger = CostLedger(trace.pricing_table())
    buffer = io.StringIO()
    recorder = TraceRecorder(
        buffer, world=trace.world, pricing=trace.pricing_table(),
        created_at=trace.created_at,
    )
    recorder.attach(hub)
    try:
        result = run_session(
            initial,
            Instruction(trace.instruction),
            trace.session_config(),
            registry,
            hub,
            ledger=ledger,
            observers=(recorder,),
        )
    finally:
        recorder.close()
    new_lines = tuple(
        line for line in buffer.getvalue().splitlines() if line.strip()
    )[1:]  # drop header; it is compared via fields below
    old_lines = trace.raw_lines
    for index, (old, new) in enumerate(zip(old_lines, new_lines)):
        if old != new:
            raise ReplayMismatch(
                f"record {index} diverged:\n  recorded: {old}\n  replayed: {new}",
                first_divergent_event=index,
            )
    if len(old_lines) != len(new_lines):
        index = min(len(old_lines), len(new_lines))
        raise ReplayMismatch(
            f"record count diverged: {len(old_lines)} recorded, {len(new_lines)} replayed",
            first_divergent_event=index,
        )
    if result.result_hash != finished["result_hash"]:
        raise ReplayMismatch(
            f"result hash diverged: recorded {finished['result_hash']}, "
            f"replayed {result.result_hash}"
        )
    if rerecord_path is not None:
        header_line = json.dumps(
            json.loads(Path(path).read_text(encoding="utf-8").splitlines()[0]),
            separators=(",", ":"),
            sort_keys=True,
        )
        Path(rerecord_path).write_text(
            "\n".join([header_line, *new_lines]) + "\n", encoding="utf-8"
        )
    return ReplayOutcome(
        result=result,
        recorded_result_hash=finished["result_hash"],
        rerecorded_lines=new_lines,
    )


@dataclass(frozen=True)
class TraceReport:
    """The acceptance-mode breakdown across one or more traces."""

    sessions: int
    turns: int
    pass_rates_by_iteration: tuple[tuple[int, float], ...]  # 1-based iteration
    fallback_rate: float
    mean_cost_usd_per_turn: float
    mean_latency_ms_per_turn: float

    def first_attempt_rate(self) -> float:
        for iteration, rate in self.pass_rates_by_iteration:
            if iteration == 1:
                return rate
        return 0.0

    def as_text(self) -> str:
        lines = [
            f"sessions\t{self.sessions}",
            f"turns\t{self.turns}",
        ]
        for iteration, rate in self.pass_rates_by_iteration:
            lines.append(f"pass@{iteration}\t{rate * 100:.2f}%")
        lines.append(f"fallback\t{self.fallback_rate * 100:.2f}%")
        lines.append(f"mean_cost_usd_per_turn\t{self.mean_cost_usd_per_turn:.6f}")
        lines.append(f"mean_latency_ms_per_turn\t{self.mean_latency_ms_per_turn:.2f}")
        return "\n".join(lines) + "\n"


def report(traces: Sequence[SessionTrace | str | Path]) -> TraceReport:
    """Aggregate acceptance statistics over recorded sessions."""
    if not traces:
        raise ValueError("report requires at least one trace")
    loaded = [t if isinstance(t, SessionTrace) else load_trace(t) for t in traces]
    turns = 0
    max_iterations = 1
    threshold_counts: dict[int, int] = {}
    fallbacks = 0
    total_cost_micro = 0
    total_latency = 0.0
    for trace in loaded:
        max_iterations = max(
            max_iterations, int(trace.config.get("max_iterations", 1))
        )
        for event in trace.events("turn_completed"):
            turns += 1
            if event["accepted_via"] == "fallback":
                fallbacks += 1
            else:
                iteration = int(event["iterations_used"])
                threshold_counts[iteration] = threshold_counts.get(iteration, 0) + 1
        finished = trace.finished()
        if finished is not None:
            total_cost_micro += sum(v for _, v in finished["ledger_totals"])
        total_latency += sum(c["latency_ms"] for c in trace.backend_calls())
    if turns == 0:
        raise ValueError("traces contain no completed turns")
    rates = tuple(
        (iteration, threshold_counts.get(iteration, 0) / turns)
        for iteration in range(1, max_iterations + 1)
    )
    return TraceReport(
        sessions=len(loaded),
        turns=turns,
        pass_rates_by_iteration=rates,
        fallback_rate=fallbacks / turns,
        mean_cost_usd_per_turn=total_cost_micro / 1_000_000 / turns,
        mean_latency_ms_per_turn=total_latency / turns,
    )
