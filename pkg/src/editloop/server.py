"""Session-control API for the browser console.

Exposes start / next-turn / fetch-state plus a server-sent event stream of
trace events. The console talks only to this surface; the engine remains
the single authority over the control loop, and every turn is recorded as
a normal trace file the CLI can replay.

Endpoints:
    GET  /v1/health
    POST /v1/sessions                {scene, instruction} -> {session_id}
    POST /v1/sessions/{id}/turns     {instruction} -> 409 while a turn runs
    GET  /v1/sessions/{id}           status + turn summaries + cost
    GET  /v1/sessions/{id}/state     current scene text
    GET  /v1/sessions/{id}/events    SSE stream (supports Last-Event-ID)
"""

from __future__ import annotations

import json
import tempfile
import threading
import uuid
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .backends.base import BackendHub
from .config import RunSetup, fault_profile_from, load_config
from .core import Instruction, StateOrigin, VisualState
from .costing import CostLedger
from .errors import EditLoopError
from .events import SessionEvent
from .loop import run_session
from .orchestrator import SessionStateFactory
from .simworld.scene import Scene, parse_scene
from .simworld.tools import SimWorld
from .trace import TraceRecorder, world_descriptor_for_scene


class StartSessionBody(BaseModel):
    scene: str = Field(min_length=1, description="scene file text")
    instruction: str = Field(min_length=1)


class NextTurnBody(BaseModel):
    instruction: str = Field(min_length=1)


class _RecordingStateFactory(SessionStateFactory):
    """Keeps id -> content so the event stream can render candidates."""

    def __init__(self, contents: dict[str, Any], prefix: str = "s", start: int = 1):
        super().__init__(prefix, start)
        self._contents = contents

    def new_state(self, content, parent, width=None, height=None, origin=None):
        state = super().new_state(content, parent, width, height, origin)
        self._contents[state.id] = content
        return state


class EngineSession:
    """One console session: a scene evolving over user turns."""

    def __init__(self, session_id: str, setup: RunSetup, scene: Scene, trace_dir: Path):
        self.id = session_id
        self.setup = setup
        self.scene = scene
        self.trace_dir = trace_dir
        self.status = "idle"
        self.error: str | None = None
        self.turns_started = 0
        self.turn_summaries: list[dict[str, Any]] = []
        self.trace_paths: list[str] = []
        self.cost_micro = 0
        self.events: list[dict[str, Any]] = []
        self._cond = threading.Condition()
        self._state_contents: dict[str, Any] = {}

    # -- event plumbing -----------------------------------------------------

    def _push(self, record: dict[str, Any]) -> None:
        with self._cond:
            record["seq"] = len(self.events)
            self.events.append(record)
            self._cond.notify_all()

    def _observer(self, turn: int):
        def on_event(event: SessionEvent) -> None:
            record = {"kind": event.kind(), "turn": turn}
            record.update(event.payload())
            state_id = record.get("state_id")
            content = self._state_contents.get(state_id)
            if isinstance(content, Scene):
                record["scene"] = content.canonical_text()
            self._push(record)

        return on_event

    # -- turn control --------------------------------------------------------

    def start_turn(self, instruction: str) -> int:
        with self._cond:
            if self.status == "running":
                raise HTTPException(409, "a turn is already in flight")
            self.status = "running"
            self.turns_started += 1
            turn = self.turns_started
        thread = threading.Thread(
            target=self._run_turn, args=(turn, instruction), daemon=True
        )
        thread.start()
        return turn

    def _run_turn(self, turn: int, instruction: str) -> None:
        trace_path = self.trace_dir / f"{self.id}-turn{turn}.trace"
        try:
            fault = fault_profile_from(self.setup.world, seed_offset=turn - 1)
            world = SimWorld(fault)
            initial = VisualState(
                id="initial", content=self.scene, origin=StateOrigin.INITIAL,
                width=self.scene.width, height=self.scene.height,
            )
            self._state_contents = {"initial": self.scene}
            ledger = CostLedger(self.setup.pricing)
            hub = BackendHub(self.setup.backends, ledger=ledger)
            recorder = TraceRecorder(
                trace_path,
                world=world_descriptor_for_scene(self.scene.canonical_text(), fault),
                pricing=self.setup.pricing,
            )
            recorder.attach(hub)
            runtime = _RecordingStateFactory(self._state_contents)
            try:
                result = run_session(
                    initial,
                    Instruction(instruction),
                    self.setup.session,
                    world.registry(),
                    hub,
                    ledger=ledger,
                    observers=(recorder, self._observer(turn)),
                    state_factory=runtime,
                )
            finally:
                recorder.close()
            with self._cond:
                self.scene = result.final.content
                self.cost_micro += ledger.total_micro()
                self.trace_paths.append(str(trace_path))
                for summary in result.per_turn:
                    self.turn_summaries.append(
                        {
                            "turn": turn,
                            "sub_task_index": summary.sub_task_index,
                            "sub_task": summary.sub_task,
                            "iterations_used": summary.iterations_used,
                            "accepted_score": summary.accepted_score,
                            "accepted_via": summary.accepted_via,
                        }
                    )
                self.status = "idle"
                self._cond.notify_all()
            self._push({"kind": "turn_done", "turn": turn, "status": "idle"})
        except (EditLoopError, ValueError) as exc:
            with self._cond:
                self.status = "error"
                self.error = str(exc)
                self._cond.notify_all()
            self._push({"kind": "turn_failed", "turn": turn, "error": str(exc)})

    # -- views ----------------------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        with self._cond:
            return {
                "session_id": self.id,
                "status": self.status,
                "error": self.error,
                "turns_started": self.turns_started,
                "turns": list(self.turn_summaries),
                "cost_usd": self.cost_micro / 1_000_000,
                "trace_paths": list(self.trace_paths),
            }

    def stream(self, after: int) -> Iterator[str]:
        cursor = after
        while True:
            with self._cond:
                while cursor >= len(self.events) and self.status == "running":
                    self._cond.wait(timeout=0.5)
                pending = self.events[cursor:]
                running = self.status == "running"
            for record in pending:
                cursor = record["seq"] + 1
                yield f"id: {record['seq']}\ndata: {json.dumps(record)}\n\n"
            if not running and cursor >= len(self.events):
                yield 'data: {"kind":"stream_idle"}\n\n'
                return


def create_app(config_path: str | Path, trace_dir: str | Path | None = None) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    setup = load_config(config_path)
    traces = Path(trace_dir) if trace_dir else Path(tempfile.mkdtemp(prefix="editloop-traces-"))
    traces.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="editloop session control")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, EngineSession] = {}
    sessions_lock = threading.Lock()

    def _get(session_id: str) -> EngineSession:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session: {session_id}")
        return session

    @app.get("/v1/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def start_session(body: StartSessionBody) -> dict[str, Any]:
        try:
            scene = parse_scene(body.scene)
        except ValueError as exc:
            raise HTTPException(422, f"invalid scene: {exc}") from exc
        session_id = uuid.uuid4().hex[:12]
        session = EngineSession(session_id, setup, scene, traces)
        with sessions_lock:
            sessions[session_id] = session
        turn = session.start_turn(body.instruction)
        return {"session_id": session_id, "status": "running", "turn": turn}

    @app.post("/v1/sessions/{session_id}/turns")
    def next_turn(session_id: str, body: NextTurnBody) -> dict[str, Any]:
        session = _get(session_id)
        turn = session.start_turn(body.instruction)
        return {"session_id": session_id, "status": "running", "turn": turn}

    @app.get("/v1/sessions/{session_id}")
    def fetch(session_id: str) -> dict[str, Any]:
        return _get(session_id).snapshot()

    @app.get("/v1/sessions/{session_id}/state")
    def fetch_state(session_id: str) -> dict[str, str]:
        session = _get(session_id)
        with session._cond:
            return {"scene": session.scene.canonical_text()}

    @app.get("/v1/sessions/{session_id}/events")
    def events(session_id: str, request: Request, after: int = 0):
        session = _get(session_id)
        last_id = request.headers.get("last-event-id")
        start = int(last_id) + 1 if last_id and last_id.isdigit() else after
        return StreamingResponse(
            session.stream(start), media_type="text/event-stream"
        )

    return app
