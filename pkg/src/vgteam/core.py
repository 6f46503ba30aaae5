"""Shared domain vocabulary: prompts, length/topic classes, outcomes, metrics."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence, Union

from vgteam.errors import EmptyPrompt


class LengthClass(str, Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"


class TopicClass(str, Enum):
    VEHICLE = "vehicle"
    CONCERT = "concert"
    ASSOCIATION_FOOTBALL = "association_football"
    ANIMAL = "animal"
    FOOD = "food"


class FailureReason(str, Enum):
    NETWORK_INSTABILITY = "network_instability"
    CHARACTER_CONFUSION = "character_confusion"
    INFINITE_LOOP = "infinite_loop"


class TerminalState(str, Enum):
    COMPLETED = "completed"
    ABORTED_NETWORK = "aborted_network"
    ABORTED_CONFUSION = "aborted_confusion"
    ABORTED_LOOP_CAP = "aborted_loop_cap"


_ABORT_REASONS = {
    TerminalState.ABORTED_NETWORK: FailureReason.NETWORK_INSTABILITY,
    TerminalState.ABORTED_CONFUSION: FailureReason.CHARACTER_CONFUSION,
    TerminalState.ABORTED_LOOP_CAP: FailureReason.INFINITE_LOOP,
}


@dataclass(frozen=True)
class UserPrompt:
    text: str
    topic_class: TopicClass | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise EmptyPrompt("prompt text is empty")


# ---------------------------------------------------------------------------
# Inappropriate-content flags and outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModerationFlagged:
    scene: int

    def to_dict(self) -> dict:
        return {"kind": "moderation_flagged", "scene": self.scene}


@dataclass(frozen=True)
class RepetitiveVisuals:
    first: int
    second: int

    def __post_init__(self) -> None:
        if self.first == self.second:
            raise ValueError("repetitive pair must name two different scenes")

    def to_dict(self) -> dict:
        return {"kind": "repetitive_visuals", "scenes": [self.first, self.second]}


InappropriateFlag = Union[ModerationFlagged, RepetitiveVisuals]


def flag_from_dict(data: dict) -> InappropriateFlag:
    if data["kind"] == "moderation_flagged":
        return ModerationFlagged(int(data["scene"]))
    if data["kind"] == "repetitive_visuals":
        first, second = data["scenes"]
        return RepetitiveVisuals(int(first), int(second))
    raise ValueError(f"unknown flag kind {data['kind']!r}")


@dataclass(frozen=True)
class Appropriate:
    label = "appropriate"

    def to_dict(self) -> dict:
        return {"category": self.label}


@dataclass(frozen=True)
class Inappropriate:
    flags: tuple[InappropriateFlag, ...]
    label = "inappropriate"

    def __post_init__(self) -> None:
        object.__setattr__(self, "flags", tuple(self.flags))
        if not self.flags:
            raise ValueError("Inappropriate outcome needs at least one flag")

    def to_dict(self) -> dict:
        return {"category": self.label, "flags": [f.to_dict() for f in self.flags]}


@dataclass(frozen=True)
class Invalid:
    reason: FailureReason
    label = "invalid"

    def __post_init__(self) -> None:
        object.__setattr__(self, "reason", FailureReason(self.reason))

    def to_dict(self) -> dict:
        return {"category": self.label, "reason": self.reason.value}


Outcome = Union[Appropriate, Inappropriate, Invalid]


def outcome_from_dict(data: dict) -> Outcome:
    category = data["category"]
    if category == "appropriate":
        return Appropriate()
    if category == "inappropriate":
        return Inappropriate(tuple(flag_from_dict(f) for f in data["flags"]))
    if category == "invalid":
        return Invalid(FailureReason(data["reason"]))
    raise ValueError(f"unknown outcome category {category!r}")


def outcome_code(outcome: Outcome) -> str:
    """Flat text form used in CSV reports, e.g. ``invalid:infinite_loop``."""
    if isinstance(outcome, Invalid):
        return f"invalid:{outcome.reason.value}"
    return outcome.label


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunMetrics:
    total_loops: int = 0
    total_token_length: int = 0
    communicate_time: float = 0.0
    total_time: float = 0.0
    cost: Decimal = Decimal(0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cost", Decimal(self.cost))
        for name in ("total_loops", "total_token_length", "communicate_time", "total_time", "cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.communicate_time > self.total_time:
            raise ValueError("communicate_time exceeds total_time")

    def to_dict(self) -> dict:
        return {
            "total_loops": self.total_loops,
            "total_token_length": self.total_token_length,
            "communicate_time": self.communicate_time,
            "total_time": self.total_time,
            "cost": str(self.cost),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunMetrics":
        return cls(
            total_loops=int(data["total_loops"]),
            total_token_length=int(data["total_token_length"]),
            communicate_time=float(data["communicate_time"]),
            total_time=float(data["total_time"]),
            cost=Decimal(data["cost"]),
        )


def merge_metrics(parts: Iterable[RunMetrics]) -> RunMetrics:
    loops = tokens = 0
    comm = total = 0.0
    cost = Decimal(0)
    for m in parts:
        loops += m.total_loops
        tokens += m.total_token_length
        comm += m.communicate_time
        total += m.total_time
        cost += m.cost
    return RunMetrics(loops, tokens, comm, total, cost)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

_HAS_WORD_CHAR = re.compile(r"\w")


def count_words(text: str) -> int:
    """Whitespace-split word count.

    Hyphen/dash-joined tokens ("head-turning", "amazing—here's") are a single
    whitespace token already; tokens made only of punctuation (a free-standing
    dash, say) are not words.
    """
    return sum(1 for tok in text.split() if _HAS_WORD_CHAR.search(tok))


def classify_prompt_length(text: str, short_max: int = 5, long_min: int = 11) -> LengthClass:
    if not text or not text.strip():
        raise EmptyPrompt("prompt text is empty")
    if short_max >= long_min:
        raise ValueError("short_max must be below long_min")
    words = count_words(text)
    if words <= short_max:
        return LengthClass.SHORT
    if words >= long_min:
        return LengthClass.LONG
    return LengthClass.MEDIUM


def classify_outcome(terminal_state: TerminalState, flags: Sequence[InappropriateFlag] = ()) -> Outcome:
    terminal_state = TerminalState(terminal_state)
    if terminal_state in _ABORT_REASONS:
        return Invalid(_ABORT_REASONS[terminal_state])
    if flags:
        return Inappropriate(tuple(flags))
    return Appropriate()


def _token_set(text: str) -> frozenset[str]:
    return frozenset(re.findall(r"\w+", text.lower()))


def token_overlap(a: str, b: str) -> float:
    """Jaccard overlap of the lower-cased word sets of two texts."""
    sa, sb = _token_set(a), _token_set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def detect_repetitive_visuals(prompts: Sequence[str], threshold: float = 0.8) -> list[RepetitiveVisuals]:
    """Flag every pair of (1-based) image prompts whose overlap reaches ``threshold``."""
    flags = []
    for i in range(len(prompts)):
        for j in range(i + 1, len(prompts)):
            if token_overlap(prompts[i], prompts[j]) >= threshold:
                flags.append(RepetitiveVisuals(i + 1, j + 1))
    return flags


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    prompt: UserPrompt
    length_class: LengthClass
    model_id: str
    metrics: RunMetrics
    outcome: Outcome
    transcript_digest: str
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        data = {
            "run_id": self.run_id,
            "prompt": self.prompt.text,
            "topic_class": self.prompt.topic_class.value if self.prompt.topic_class else None,
            "length_class": self.length_class.value,
            "model_id": self.model_id,
            "metrics": self.metrics.to_dict(),
            "outcome": self.outcome.to_dict(),
            "transcript_digest": self.transcript_digest,
        }
        data.update(self.extra)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        known = {"run_id", "prompt", "topic_class", "length_class", "model_id", "metrics", "outcome", "transcript_digest"}
        topic = data.get("topic_class")
        return cls(
            run_id=data["run_id"],
            prompt=UserPrompt(data["prompt"], TopicClass(topic) if topic else None),
            length_class=LengthClass(data["length_class"]),
            model_id=data["model_id"],
            metrics=RunMetrics.from_dict(data["metrics"]),
            outcome=outcome_from_dict(data["outcome"]),
            transcript_digest=data["transcript_digest"],
            extra={k: v for k, v in data.items() if k not in known},
        )
