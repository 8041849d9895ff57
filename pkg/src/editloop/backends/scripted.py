"""Offline backends: canned replies, rule functions, and failure injection."""

from __future__ import annotations

import threading
from typing import Callable, Sequence

from ..errors import BackendTimeout, BackendUnavailable
from .base import BackendRequest, BackendResponse, TokenUsage


class FakeClock:
    """A hand-advanced clock for deterministic timeout tests."""

    def __init__(self, start_ms: float = 0.0):
        self._now = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> float:
        with self._lock:
            return self._now

    def advance(self, ms: float) -> None:
        with self._lock:
            self._now += ms


class ScriptedBackend:
    """Replays canned responses in order; the cursor is serialized.

    The k-th invoke returns the k-th scripted reply regardless of caller
    interleaving. Exhausting the script raises BackendUnavailable.
    """

    def __init__(self, replies: Sequence[str | BackendResponse]):
        self._replies = [
            reply if isinstance(reply, BackendResponse) else BackendResponse(text=reply)
            for reply in replies
        ]
        self._cursor = 0
        self._lock = threading.Lock()

    def invoke(self, request: BackendRequest) -> BackendResponse:
        with self._lock:
            if self._cursor >= len(self._replies):
                raise BackendUnavailable(
                    f"scripted backend exhausted after {len(self._replies)} replies"
                )
            reply = self._replies[self._cursor]
            self._cursor += 1
        return reply

    @property
    def calls_made(self) -> int:
        with self._lock:
            return self._cursor


class RuleBackend:
    """Computes replies from the request via a pure function; no model."""

    def __init__(
        self,
        rule: Callable[[BackendRequest], str],
        token_usage: TokenUsage | None = None,
    ):
        self._rule = rule
        self._usage = token_usage

    def invoke(self, request: BackendRequest) -> BackendResponse:
        return BackendResponse(text=self._rule(request), token_usage=self._usage)


class TimeoutBackend:
    """Simulates a deadline overrun: advances the clock, then times out."""

    def __init__(self, deadline_ms: float, clock: FakeClock):
        self.deadline_ms = deadline_ms
        self.clock = clock

    def invoke(self, request: BackendRequest) -> BackendResponse:
        self.clock.advance(self.deadline_ms)
        raise BackendTimeout(f"no reply within {self.deadline_ms:g} ms")


class UnavailableBackend:
    """Always raises BackendUnavailable; for escalation-path tests."""

    def __init__(self, reason: str = "injected outage"):
        self.reason = reason

    def invoke(self, request: BackendRequest) -> BackendResponse:
        raise BackendUnavailable(self.reason)
