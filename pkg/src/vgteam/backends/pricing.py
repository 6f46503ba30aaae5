"""Exact-decimal pricing and the append-only cost ledger."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping

from vgteam.backends.base import MediaKind, Usage
from vgteam.errors import UnknownModel

PER_MILLION = Decimal(1_000_000)


def _dec(value) -> Decimal:
    # str() first so that a float like 0.1 becomes Decimal("0.1"), not its binary expansion
    return value if isinstance(value, Decimal) else Decimal(str(value))


@dataclass(frozen=True)
class ChatRate:
    prompt_rate: Decimal  # USD per 1M prompt tokens
    completion_rate: Decimal  # USD per 1M completion tokens

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt_rate", _dec(self.prompt_rate))
        object.__setattr__(self, "completion_rate", _dec(self.completion_rate))
        if self.prompt_rate < 0 or self.completion_rate < 0:
            raise ValueError("rates must be >= 0")


@dataclass(frozen=True)
class PricingTable:
    models: Mapping[str, ChatRate] = field(default_factory=dict)
    media: Mapping[MediaKind, Decimal] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", dict(self.models))
        media = {MediaKind(k): _dec(v) for k, v in self.media.items()}
        if any(v < 0 for v in media.values()):
            raise ValueError("media rates must be >= 0")
        object.__setattr__(self, "media", media)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PricingTable":
        models = {
            name: ChatRate(rate["prompt_rate"], rate["completion_rate"])
            for name, rate in (data.get("models") or {}).items()
        }
        return cls(models, data.get("media") or {})

    def to_dict(self) -> dict:
        return {
            "models": {
                k: {"prompt_rate": str(v.prompt_rate), "completion_rate": str(v.completion_rate)}
                for k, v in sorted(self.models.items())
            },
            "media": {k.value: str(v) for k, v in sorted(self.media.items(), key=lambda kv: kv[0].value)},
        }


def chat_cost(model_id: str, usage: Usage, pricing: PricingTable) -> Decimal:
    try:
        rate = pricing.models[model_id]
    except KeyError:
        raise UnknownModel(f"no pricing for model {model_id!r}") from None
    return (usage.prompt_tokens * rate.prompt_rate + usage.completion_tokens * rate.completion_rate) / PER_MILLION


def media_cost(kind: MediaKind, pricing: PricingTable) -> Decimal:
    try:
        return pricing.media[MediaKind(kind)]
    except KeyError:
        raise UnknownModel(f"no pricing for media kind {MediaKind(kind).value!r}") from None


def cost_of(item, pricing: PricingTable, model_id: str | None = None) -> Decimal:
    """Cost of a chat ``Usage`` (needs ``model_id``) or of one media call of kind ``item``."""
    if isinstance(item, Usage):
        if model_id is None:
            raise ValueError("model_id is required to price chat usage")
        return chat_cost(model_id, item, pricing)
    return media_cost(item, pricing)


@dataclass(frozen=True)
class LedgerEntry:
    run_id: str
    kind: str  # "chat" or a MediaKind value
    usage: Usage | None
    cost: Decimal


class CostLedger:
    """Append-only record of every priced call; safe to share between runs."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def record_chat(self, run_id: str, model_id: str, usage: Usage, pricing: PricingTable) -> Decimal:
        cost = chat_cost(model_id, usage, pricing)
        self.append(LedgerEntry(run_id, "chat", usage, cost))
        return cost

    def record_media(self, run_id: str, kind: MediaKind, pricing: PricingTable) -> Decimal:
        cost = media_cost(kind, pricing)
        self.append(LedgerEntry(run_id, MediaKind(kind).value, None, cost))
        return cost

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def total(self, run_id: str | None = None) -> Decimal:
        return sum((e.cost for e in self.entries if run_id is None or e.run_id == run_id), Decimal(0))


def mean_cost_per_video(total: Decimal, videos: int) -> Decimal | None:
    """Total spend divided by the number of videos actually generated."""
    if videos <= 0:
        return None
    return _dec(total) / videos


def sum_costs(costs: Iterable[Decimal]) -> Decimal:
    return sum((_dec(c) for c in costs), Decimal(0))
