"""Uniform client abstraction over every language/vision model call."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

from ..core import VisualState
from ..costing import CostLedger
from ..errors import BackendTimeout, BackendUnavailable


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class BackendRequest:
    """One model call: rendered prompt, image attachments, decoding hints.

    `bindings` carries the raw render inputs so rule-driven offline
    backends can act on structured fields instead of re-parsing the
    prompt; remote transports ignore it.
    """

    backend_id: str
    prompt: str
    attachments: tuple[VisualState, ...] = ()
    max_output_tokens: int | None = None
    temperature: float | None = None
    bindings: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        object.__setattr__(self, "attachments", tuple(self.attachments))
        object.__setattr__(self, "bindings", tuple(self.bindings))

    def binding_map(self) -> dict[str, str]:
        return dict(self.bindings)

    def prompt_hash(self) -> str:
        return hashlib.sha256(self.prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendResponse:
    text: str
    token_usage: TokenUsage | None = None
    latency_ms: float = 0.0


class Backend(Protocol):
    def invoke(self, request: BackendRequest) -> BackendResponse: ...


@dataclass(frozen=True)
class BackendCall:
    """What the hub observed for one completed call; feeds trace recording."""

    backend_id: str
    phase: str
    prompt_hash: str
    response: BackendResponse


BackendCallListener = Callable[[BackendCall], None]

PHASES = ("plan", "tool", "reflect")


class BackendHub:
    """Routes requests to registered backends and meters every call.

    Token usage lands in the cost ledger under the caller-declared phase;
    listeners (trace recorders) see each completed call in order.
    """

    def __init__(
        self,
        backends: Mapping[str, Backend],
        ledger: CostLedger | None = None,
    ):
        self._backends = dict(backends)
        self._ledger = ledger
        self._listeners: list[BackendCallListener] = []

    def register(self, backend_id: str, backend: Backend) -> None:
        self._backends[backend_id] = backend

    def has(self, backend_id: str) -> bool:
        return backend_id in self._backends

    def add_listener(self, listener: BackendCallListener) -> None:
        self._listeners.append(listener)

    def invoke(self, request: BackendRequest, phase: str = "reflect") -> BackendResponse:
        if phase not in PHASES:
            raise ValueError(f"unknown cost phase: {phase}")
        backend = self._backends.get(request.backend_id)
        if backend is None:
            raise BackendUnavailable(f"no backend registered as {request.backend_id!r}")
        response = backend.invoke(request)
        if self._ledger is not None and response.token_usage is not None:
            self._ledger.record_tokens(
                phase, request.backend_id, response.token_usage.total
            )
        if self._listeners:
            call = BackendCall(
                backend_id=request.backend_id,
                phase=phase,
                prompt_hash=request.prompt_hash(),
                response=response,
            )
            for listener in self._listeners:
                listener(call)
        return response

    def invoke_with_retry(
        self, request: BackendRequest, phase: str, attempts: int = 2
    ) -> BackendResponse:
        """Retry transient transport failures; the last error escapes."""
        last: Exception | None = None
        for _ in range(max(1, attempts)):
            try:
                return self.invoke(request, phase)
            except (BackendUnavailable, BackendTimeout) as exc:
                last = exc
        assert last is not None
        raise last
