"""Per-call cost ledger and closed-form phase-cost estimators.

Ledger entries are kept in integer micro-USD so sums stay exact; the
estimators return floats for comparison against published price sheets.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

PHASES = ("plan", "tool", "reflect")


@dataclass(frozen=True)
class PricingTable:
    """USD prices: per million tokens per backend, per image per cloud tool."""

    usd_per_million_tokens: tuple[tuple[str, float], ...] = ()
    usd_per_image: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        for name, price in (*self.usd_per_million_tokens, *self.usd_per_image):
            if price < 0:
                raise ValueError(f"negative price for {name!r}")
        object.__setattr__(
            self, "usd_per_million_tokens", tuple(self.usd_per_million_tokens)
        )
        object.__setattr__(self, "usd_per_image", tuple(self.usd_per_image))

    @classmethod
    def from_mappings(
        cls,
        tokens: Mapping[str, float] | None = None,
        images: Mapping[str, float] | None = None,
    ) -> "PricingTable":
        return cls(
            usd_per_million_tokens=tuple((tokens or {}).items()),
            usd_per_image=tuple((images or {}).items()),
        )

    def token_price(self, backend_id: str) -> float:
        return dict(self.usd_per_million_tokens).get(backend_id, 0.0)

    def image_price(self, tool_id: str) -> float:
        return dict(self.usd_per_image).get(tool_id, 0.0)


@dataclass(frozen=True)
class LedgerEntry:
    phase: str
    source: str
    tokens: int | None
    images: int | None
    usd_micro: int
    cost_class: str = ""  # "local"/"cloud" for tool calls, empty for token entries
    outcome: str = ""  # "ok"/"failure" for tool calls

    @property
    def usd(self) -> float:
        return self.usd_micro / 1_000_000


def _to_micro(usd: Decimal) -> int:
    return int((usd * 1_000_000).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


class CostLedger:
    """Append-only record of spend, bucketed by phase. Appends are serialized."""

    def __init__(self, pricing: PricingTable | None = None):
        self.pricing = pricing or PricingTable()
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def _append(self, entry: LedgerEntry) -> None:
        if entry.phase not in PHASES:
            raise ValueError(f"unknown phase: {entry.phase}")
        with self._lock:
            self._entries.append(entry)

    def record_tokens(self, phase: str, backend_id: str, tokens: int) -> LedgerEntry:
        price = Decimal(str(self.pricing.token_price(backend_id)))
        usd = Decimal(tokens) * price / Decimal(1_000_000)
        entry = LedgerEntry(phase, backend_id, tokens, None, _to_micro(usd))
        self._append(entry)
        return entry

    def record_images(
        self,
        phase: str,
        tool_id: str,
        images: int = 1,
        cost_class: str = "",
        outcome: str = "ok",
    ) -> LedgerEntry:
        price = Decimal(str(self.pricing.image_price(tool_id)))
        entry = LedgerEntry(
            phase,
            tool_id,
            None,
            images,
            _to_micro(Decimal(images) * price),
            cost_class=cost_class,
            outcome=outcome,
        )
        self._append(entry)
        return entry

    def phase_total_micro(self, phase: str) -> int:
        return sum(e.usd_micro for e in self.entries if e.phase == phase)

    def total_micro(self) -> int:
        return sum(e.usd_micro for e in self.entries)

    def total_usd(self) -> float:
        return self.total_micro() / 1_000_000

    def phase_totals(self) -> dict[str, int]:
        return {phase: self.phase_total_micro(phase) for phase in PHASES}


def estimate_plan_cost(tokens: float, price_per_million: float) -> float:
    """Cost of the single planning call at the given token price."""
    if tokens < 0:
        raise ValueError("tokens must be >= 0")
    return tokens / 1_000_000 * price_per_million


def estimate_tool_cost(
    avg_iterations: float, cloud_prob: float, price_per_image: float
) -> float:
    """Amortized per-turn cost of cloud editor invocations."""
    if min(avg_iterations, cloud_prob, price_per_image) < 0 or cloud_prob > 1:
        raise ValueError("arguments must be >= 0 with cloud_prob <= 1")
    return avg_iterations * cloud_prob * price_per_image


def estimate_reflect_cost(
    avg_iterations: float, experts: Sequence[tuple[float, float]]
) -> float:
    """Per-turn cost of the expert panel: tokens and price per expert."""
    return avg_iterations * sum(
        tokens / 1_000_000 * price for tokens, price in experts
    )


def total(costs: Iterable[float] | CostLedger) -> float:
    """Sum phase costs, from either raw estimates or a live ledger."""
    if isinstance(costs, CostLedger):
        return costs.total_usd()
    return sum(costs)
