"""Logged chat messages, the JSON Lines transcript format, and metric replay."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from vgteam.backends.base import MediaKind, Usage, digest
from vgteam.backends.pricing import PricingTable, chat_cost, media_cost
from vgteam.core import Outcome, RunMetrics, TerminalState, outcome_from_dict
from vgteam.roles import RoleId

NORMALIZED_WALL_TIME = "1970-01-01T00:00:00.000Z"


class Direction(str, Enum):
    REQUEST = "request"
    REPLY = "reply"


@dataclass(frozen=True)
class Message:
    run_id: str
    seq: int
    agent: RoleId
    direction: Direction
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0
    wall_time: str = NORMALIZED_WALL_TIME
    sources: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seq": self.seq,
            "agent": self.agent.value,
            "direction": self.direction.value,
            "content": self.content,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_ms": self.latency_ms,
            "wall_time": self.wall_time,
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Message":
        return cls(
            run_id=data["run_id"],
            seq=int(data["seq"]),
            agent=RoleId(data["agent"]),
            direction=Direction(data["direction"]),
            content=data["content"],
            prompt_tokens=int(data["prompt_tokens"]),
            completion_tokens=int(data["completion_tokens"]),
            latency_ms=int(data["latency_ms"]),
            wall_time=data["wall_time"],
            sources=tuple(data.get("sources", ())),
        )


@dataclass(frozen=True)
class MediaCall:
    kind: MediaKind
    scene: int | None
    digest: str
    moderation_flagged: bool
    latency_ms: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "scene": self.scene,
            "digest": self.digest,
            "moderation_flagged": self.moderation_flagged,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MediaCall":
        return cls(MediaKind(data["kind"]), data["scene"], data["digest"], bool(data["moderation_flagged"]), int(data["latency_ms"]))


@dataclass(frozen=True)
class Transcript:
    run_id: str
    messages: tuple[Message, ...]
    terminal_state: TerminalState
    model_id: str
    metrics: RunMetrics
    outcome: Outcome
    media_calls: tuple[MediaCall, ...] = ()
    error: str | None = None

    def summary_dict(self) -> dict:
        return {
            "type": "summary",
            "run_id": self.run_id,
            "model_id": self.model_id,
            "terminal_state": self.terminal_state.value,
            "metrics": self.metrics.to_dict(),
            "outcome": self.outcome.to_dict(),
            "media_calls": [c.to_dict() for c in self.media_calls],
            "error": self.error,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(m.to_dict(), ensure_ascii=False) for m in self.messages]
        lines.append(json.dumps(self.summary_dict(), ensure_ascii=False))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        messages = []
        summary = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            data = json.loads(line)
            if data.get("type") == "summary":
                if summary is not None:
                    raise ValueError(f"line {lineno}: second summary line")
                summary = data
            else:
                if summary is not None:
                    raise ValueError(f"line {lineno}: message after the summary line")
                messages.append(Message.from_dict(data))
        if summary is None:
            raise ValueError("transcript has no summary line")
        return cls(
            run_id=summary["run_id"],
            messages=tuple(messages),
            terminal_state=TerminalState(summary["terminal_state"]),
            model_id=summary["model_id"],
            metrics=RunMetrics.from_dict(summary["metrics"]),
            outcome=outcome_from_dict(summary["outcome"]),
            media_calls=tuple(MediaCall.from_dict(c) for c in summary["media_calls"]),
            error=summary.get("error"),
        )

    @property
    def digest(self) -> str:
        return digest(self.to_jsonl().encode("utf-8"))

    def normalized(self) -> "Transcript":
        return replace(self, messages=tuple(replace(m, wall_time=NORMALIZED_WALL_TIME) for m in self.messages))

    def write(self, path: str | Path) -> str:
        text = self.to_jsonl()
        Path(path).write_text(text, encoding="utf-8", newline="\n")
        return digest(text.encode("utf-8"))

    @classmethod
    def read(cls, path: str | Path) -> "Transcript":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def normalize_wall_times(jsonl: str) -> str:
    """Blank out wall-clock stamps so transcripts from different runs compare byte-for-byte."""
    return Transcript.from_jsonl(jsonl).normalized().to_jsonl()


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeCounters:
    total_loops: int = 0
    total_token_length: int = 0
    communicate_ms: int = 0

    def add(self, usage: Usage, latency_ms: int) -> "ExchangeCounters":
        return ExchangeCounters(
            self.total_loops + 1, self.total_token_length + usage.total, self.communicate_ms + latency_ms
        )

    @property
    def communicate_time(self) -> float:
        return self.communicate_ms / 1000


def chat_pairs(messages: Sequence[Message]) -> list[tuple[Message, Message]]:
    """(request, reply) pairs in seq order; the log must alternate strictly."""
    if len(messages) % 2:
        raise ValueError("transcript ends with an unanswered request")
    pairs = []
    for req, rep in zip(messages[::2], messages[1::2]):
        if req.direction is not Direction.REQUEST or rep.direction is not Direction.REPLY or req.agent != rep.agent:
            raise ValueError(f"messages {req.seq}/{rep.seq} are not a request/reply pair")
        pairs.append((req, rep))
    return pairs


def replay_counters(messages: Iterable[Message]) -> ExchangeCounters:
    counters = ExchangeCounters()
    for _, reply in chat_pairs(list(messages)):
        counters = counters.add(Usage(reply.prompt_tokens, reply.completion_tokens), reply.latency_ms)
    return counters


def replay_cost(transcript: Transcript, pricing: PricingTable) -> Decimal:
    total = Decimal(0)
    for _, reply in chat_pairs(transcript.messages):
        total += chat_cost(transcript.model_id, Usage(reply.prompt_tokens, reply.completion_tokens), pricing)
    for call in transcript.media_calls:
        total += media_cost(call.kind, pricing)
    return total
