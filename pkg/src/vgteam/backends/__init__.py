"""Chat, image, speech and music backends (live HTTP and seeded mocks)."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

from vgteam.backends.base import (
    ChatBackend,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    Clock,
    ImageBackend,
    MediaAsset,
    MediaKind,
    MusicBackend,
    RetryPolicy,
    SimulatedClock,
    SpeechBackend,
    SystemClock,
    Usage,
    digest,
    with_retry,
)
from vgteam.backends.mock import MockChat, MockImage, MockMusic, MockScript, MockSpeech
from vgteam.backends.pricing import ChatRate, CostLedger, PricingTable, cost_of

MOCK_MODEL_ID = "mock-chat"

# Placeholder rates so mock runs have a visible cost; live users must configure their own.
MOCK_PRICING = PricingTable(
    models={MOCK_MODEL_ID: ChatRate(Decimal("0.27"), Decimal("1.10"))},
    media={MediaKind.IMAGE: Decimal("0.008"), MediaKind.NARRATION: Decimal("0.002"), MediaKind.MUSIC: Decimal("0.010")},
)


@dataclass
class Backends:
    """Everything one pipeline run talks to."""

    chat: ChatBackend
    image: ImageBackend
    speech: SpeechBackend
    music: MusicBackend
    clock: Clock
    pricing: PricingTable
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    ledger: CostLedger = field(default_factory=CostLedger)
    mode: str = "mock"


def mock_backends(
    script: MockScript,
    run_id: str,
    *,
    model_id: str = MOCK_MODEL_ID,
    pricing: PricingTable | None = None,
    retry: RetryPolicy | None = None,
    ledger: CostLedger | None = None,
) -> Backends:
    clock = SimulatedClock()
    if pricing is None:
        pricing = MOCK_PRICING
        if model_id not in pricing.models:
            pricing = PricingTable({**pricing.models, model_id: pricing.models[MOCK_MODEL_ID]}, pricing.media)
    return Backends(
        chat=MockChat(script, run_id, clock),
        image=MockImage(script, run_id, clock),
        speech=MockSpeech(script, run_id, clock),
        music=MockMusic(script, run_id, clock),
        clock=clock,
        pricing=pricing,
        retry=retry or RetryPolicy(),
        ledger=ledger if ledger is not None else CostLedger(),
        mode="mock",
    )


__all__ = [
    "Backends",
    "ChatMessage",
    "ChatRate",
    "ChatRequest",
    "ChatResponse",
    "CostLedger",
    "MediaAsset",
    "MediaKind",
    "MockScript",
    "PricingTable",
    "RetryPolicy",
    "SimulatedClock",
    "SystemClock",
    "Usage",
    "cost_of",
    "digest",
    "mock_backends",
    "with_retry",
    "MOCK_MODEL_ID",
    "MOCK_PRICING",
]
