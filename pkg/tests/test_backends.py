"""Backend hub routing, scripted replay order, timeout injection, metering."""

from __future__ import annotations

import threading

import pytest

from editloop.backends.base import BackendHub, BackendRequest, BackendResponse, TokenUsage
from editloop.backends.scripted import (
    FakeClock,
    RuleBackend,
    ScriptedBackend,
    TimeoutBackend,
    UnavailableBackend,
)
from editloop.costing import CostLedger, PricingTable
from editloop.errors import BackendTimeout, BackendUnavailable


def _request(backend_id: str = "b", prompt: str = "hello") -> BackendRequest:
    return BackendRequest(backend_id=backend_id, prompt=prompt)


def test_scripted_backend_replays_in_order():
    backend = ScriptedBackend(["one", "two", "three"])
    texts = [backend.invoke(_request()).text for _ in range(3)]
    assert texts == ["one", "two", "three"]


def test_scripted_backend_order_stable_under_concurrency():
    backend = ScriptedBackend([str(i) for i in range(40)])
    seen: list[str] = []
    lock = threading.Lock()

    def worker():
        for _ in range(10):
            text = backend.invoke(_request()).text
            with lock:
                seen.append(text)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen, key=int) == [str(i) for i in range(40)]
    assert len(set(seen)) == 40  # every reply delivered exactly once


def test_scripted_exhaustion_raises_unavailable():
    backend = ScriptedBackend(["only"])
    backend.invoke(_request())
    with pytest.raises(BackendUnavailable):
        backend.invoke(_request())


def test_hub_returns_scripted_reply_verbatim():
    hub = BackendHub({"b": ScriptedBackend(["the canned reply"])})
    assert hub.invoke(_request(), phase="plan").text == "the canned reply"


def test_hub_unknown_backend_unavailable():
    hub = BackendHub({})
    with pytest.raises(BackendUnavailable):
        hub.invoke(_request("ghost"))


def test_empty_prompt_rejected():
    with pytest.raises(ValueError):
        BackendRequest(backend_id="b", prompt="")


def test_timeout_injection_elapses_past_deadline():
    clock = FakeClock()
    backend = TimeoutBackend(deadline_ms=250.0, clock=clock)
    started = clock.now_ms()
    with pytest.raises(BackendTimeout):
        backend.invoke(_request())
    assert clock.now_ms() - started >= 250.0


def test_retry_helper_retries_then_raises():
    attempts = []

    class Flaky:
        def invoke(self, request):
            attempts.append(1)
            raise BackendUnavailable("down")

    hub = BackendHub({"b": Flaky()})
    with pytest.raises(BackendUnavailable):
        hub.invoke_with_retry(_request(), phase="plan", attempts=3)
    assert len(attempts) == 3


def test_retry_helper_recovers_after_transient_failure():
    calls = []

    class FlakyOnce:
        def __init__(self):
            self.fired = False

        def invoke(self, request):
            calls.append(1)
            if not self.fired:
                self.fired = True
                raise BackendTimeout("slow")
            return BackendResponse(text="recovered")

    hub = BackendHub({"b": FlakyOnce()})
    assert hub.invoke_with_retry(_request(), phase="plan").text == "recovered"
    assert len(calls) == 2


def test_token_usage_lands_in_ledger_under_phase():
    ledger = CostLedger(PricingTable.from_mappings(tokens={"b": 1.0}))
    backend = RuleBackend(lambda req: "out", token_usage=TokenUsage(600_000, 400_000))
    hub = BackendHub({"b": backend}, ledger=ledger)
    hub.invoke(_request(), phase="reflect")
    entries = ledger.entries
    assert len(entries) == 1
    assert entries[0].phase == "reflect"
    assert entries[0].tokens == 1_000_000
    assert entries[0].usd_micro == 1_000_000  # 1M tokens at $1/M = $1


def test_negative_token_counts_rejected():
    with pytest.raises(ValueError):
        TokenUsage(-1, 0)


def test_hub_listener_sees_calls_in_per_backend_order():
    hub = BackendHub({"b": ScriptedBackend(["r1", "r2"])})
    seen = []
    hub.add_listener(lambda call: seen.append(call.response.text))
    hub.invoke(_request(), phase="plan")
    hub.invoke(_request(), phase="plan")
    assert seen == ["r1", "r2"]


def test_unavailable_backend_signals():
    hub = BackendHub({"b": UnavailableBackend("maintenance")})
    with pytest.raises(BackendUnavailable):
        hub.invoke(_request())
