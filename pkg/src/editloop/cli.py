"""Command-line surface: run sessions, replay traces, benchmark, report.

Exit codes: 0 success, 2 config error, 3 session aborted, 4 replay
mismatch.
"""

from __future__ import annotations

import argparse
import glob
import sys
from pathlib import Path

from .backends.base import BackendHub
from .config import RunSetup, fault_profile_from, load_config, load_fault_profile
from .core import Instruction, StateOrigin, VisualState
from .costing import CostLedger
from .errors import (
    ConfigInvalid,
    EditLoopError,
    PlanEmpty,
    ReplayMismatch,
    SessionAborted,
    TraceCorrupt,
)
from .events import TurnCompleted
from .loop import SessionResult, run_session
from .trace import TraceRecorder, load_trace, replay, report, world_descriptor_for_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_REPLAY_MISMATCH = 4


def _load_initial(image: str, setup: RunSetup):
    """An initial state plus the world pieces a session needs."""
    from .simworld.scene import parse_scene
    from .simworld.tools import SimWorld

    path = Path(image)
    if not path.exists():
        raise ConfigInvalid("image", f"input file not found: {image}")
    kind = setup.world.get("kind")
    if kind == "simworld":
        scene = parse_scene(path.read_text(encoding="utf-8"))
        fault = fault_profile_from(setup.world)
        world = SimWorld(fault)
        initial = VisualState(
            id="initial", content=scene, origin=StateOrigin.INITIAL,
            width=scene.width, height=scene.height,
        )
        descriptor = world_descriptor_for_scene(scene.canonical_text(), fault)
        return initial, world.registry(), descriptor
    if kind == "gateway":
        from .backends.remote import GatewayToolClient, gateway_tool_impls
        from .orchestrator import default_registry

        base_url = setup.world.get("base_url")
        if not base_url:
            raise ConfigInvalid("world", "gateway world requires base_url")
        client = GatewayToolClient(base_url, token_env=setup.world.get("token_env"))
        registry = default_registry(gateway_tool_impls(client))
        initial = VisualState(
            id="initial", content=path.read_bytes(), origin=StateOrigin.INITIAL
        )
        # raster traces record fine but refuse replay (tools are remote)
        descriptor = {"kind": "raster", "source": path.name}
        return initial, registry, descriptor
    raise ConfigInvalid("world", f"unsupported world kind: {kind!r}")


def _print_result(result: SessionResult) -> None:
    for turn in result.per_turn:
        print(
            f"turn {turn.sub_task_index}: {turn.sub_task!r} -> "
            f"score {turn.accepted_score:g} via {turn.accepted_via} "
            f"({turn.iterations_used} attempt(s))"
        )
    print(f"final state: {result.final.id} ({result.final.hash()[:16]})")
    if result.ledger is not None:
        print(f"total cost: ${result.ledger.total_usd():.6f}")


def _cmd_run(args: argparse.Namespace) -> int:
    setup = load_config(args.config)
    initial, registry, descriptor = _load_initial(args.image, setup)
    ledger = CostLedger(setup.pricing)
    hub = BackendHub(setup.backends, ledger=ledger)
    recorder = None
    observers = []
    if args.trace_out:
        recorder = TraceRecorder(args.trace_out, world=descriptor, pricing=setup.pricing)
        recorder.attach(hub)
        observers.append(recorder)
    try:
        result = run_session(
            initial,
            Instruction(args.instruction),
            setup.session,
            registry,
            hub,
            ledger=ledger,
            observers=tuple(observers),
        )
    finally:
        if recorder is not None:
            recorder.close()
    _print_result(result)
    if args.output:
        content = result.final.content
        if isinstance(content, bytes):
            Path(args.output).write_bytes(content)
        else:
            Path(args.output).write_text(
                content.canonical_text(), encoding="utf-8"
            )
        print(f"wrote final state to {args.output}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    outcome = replay(args.trace, rerecord_path=args.rerecord_out)
    print(f"ReplayMatch: result hash {outcome.recorded_result_hash}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    from .simworld.ablation import VARIANT_CLOSED, VARIANT_LINEAR, run_ablation

    names = {"closed": VARIANT_CLOSED, "closed_loop": VARIANT_CLOSED,
             "linear": VARIANT_LINEAR}
    variants = []
    for raw in args.variants.split(","):
        raw = raw.strip()
        if raw not in names:
            raise ConfigInvalid("variants", f"unknown variant {raw!r}")
        variants.append(names[raw])
    profile = load_fault_profile(args.profile)
    table = run_ablation(profile, args.tasks, variants=tuple(variants))
    text = table.as_tsv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(args.traces))
    if not paths:
        raise ConfigInvalid("traces", f"no trace files match {args.traces!r}")
    summary = report([load_trace(p) for p in paths])
    print(summary.as_text(), end="")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(args.config, trace_dir=args.trace_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="editloop",
        description="Closed-loop multi-turn image editing engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one editing session")
    p_run.add_argument("--image", required=True, help="scene file (or raster path)")
    p_run.add_argument("--instruction", required=True)
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--trace-out", default=None)
    p_run.add_argument("--output", default=None, help="write the final state here")
    p_run.set_defaults(fn=_cmd_run)

    p_replay = sub.add_parser("replay", help="re-run a recorded trace and verify it")
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--rerecord-out", default=None)
    p_replay.set_defaults(fn=_cmd_replay)

    p_bench = sub.add_parser("bench", help="closed-loop vs linear benchmark")
    p_bench.add_argument("--profile", required=True, help="fault profile JSON file")
    p_bench.add_argument("--tasks", type=int, required=True)
    p_bench.add_argument("--variants", default="closed,linear")
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(fn=_cmd_bench)

    p_report = sub.add_parser("report", help="summarize recorded traces")
    p_report.add_argument("--traces", required=True, help="glob of trace files")
    p_report.set_defaults(fn=_cmd_report)

    p_serve = sub.add_parser("serve", help="session-control API for the console")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8800)
    p_serve.add_argument("--trace-dir", default=None)
    p_serve.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayMismatch as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_REPLAY_MISMATCH
    except TraceCorrupt as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_REPLAY_MISMATCH
    except (SessionAborted, PlanEmpty) as exc:
        print(f"session failed: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except EditLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
