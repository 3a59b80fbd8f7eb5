"""Token usage ledger with exact decimal cost arithmetic."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

MILLION = Decimal(1_000_000)


@dataclass(frozen=True)
class PriceTable:
    """Currency per one million tokens."""

    prompt_per_million: Decimal = Decimal("0")
    completion_per_million: Decimal = Decimal("0")

    @classmethod
    def from_dict(cls, data: dict) -> "PriceTable":
        return cls(Decimal(str(data.get("prompt_per_million", "0"))),
                   Decimal(str(data.get("completion_per_million", "0"))))


@dataclass(frozen=True)
class UsageEntry:
    case_id: str
    agent_id: str
    phase: str
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class LedgerTotals:
    prompt_tokens: int
    completion_tokens: int
    cost: Decimal

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class UsageLedger:
    def __init__(self, price_table: PriceTable | None = None, entries=()):
        self.price_table = price_table or PriceTable()
        self._entries: list[UsageEntry] = list(entries)
        self._lock = threading.Lock()

    def record(self, case_id: str, agent_id: str, phase: str, prompt_tokens: int, completion_tokens: int) -> None:
        entry = UsageEntry(case_id, agent_id, phase, prompt_tokens, completion_tokens)
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[UsageEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def for_case(self, case_id: str) -> "UsageLedger":
        return UsageLedger(self.price_table, [e for e in self.entries if e.case_id == case_id])


def ledger_totals(ledger: UsageLedger) -> LedgerTotals:
    entries = ledger.entries
    prompt = sum(e.prompt_tokens for e in entries)
    completion = sum(e.completion_tokens for e in entries)
    prices = ledger.price_table
    cost = (Decimal(prompt) * prices.prompt_per_million + Decimal(completion) * prices.completion_per_million) / MILLION
    return LedgerTotals(prompt, completion, cost)


def format_cost(amount: Decimal, symbol: str = "$") -> str:
    """Display rounding only: half-even to cents."""
    return f"{symbol}{amount.quantize(Decimal('0.01'), rounding=ROUND_HALF_EVEN)}"
