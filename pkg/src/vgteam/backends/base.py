"""Backend request/response types, clocks and the retry policy."""

from __future__ import annotations

import hashlib
import logging
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Protocol, Sequence, TypeVar

from vgteam.errors import BackendError, NetworkInstability

logger = logging.getLogger("vgteam.backends")

T = TypeVar("T")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str
    # Who authored the text in this turn; logged on transcript messages, never sent.
    sources: tuple[str, ...] = ()

    def wire(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.7

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("chat request has no messages")
        if self.messages[0].role != "system":
            raise ValueError("first chat message must be the system prompt")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: Usage
    latency: float  # seconds, successful attempt only


class MediaKind(str, Enum):
    IMAGE = "image"
    NARRATION = "narration"
    MUSIC = "music"


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class MediaAsset:
    kind: MediaKind
    data: bytes = field(repr=False)
    duration: float
    moderation_flagged: bool
    digest: str
    latency: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MediaKind(self.kind))
        if self.digest != digest(self.data):
            raise ValueError("asset digest does not match its bytes")
        if self.kind is MediaKind.IMAGE:
            if self.duration != 0:
                raise ValueError("images have no duration")
        elif self.duration <= 0:
            raise ValueError(f"{self.kind.value} duration must be > 0")

    @classmethod
    def create(
        cls, kind: MediaKind, data: bytes, duration: float = 0.0, moderation_flagged: bool = False, latency: float = 0.0
    ) -> "MediaAsset":
        return cls(kind, data, duration, moderation_flagged, digest(data), latency)


# ---------------------------------------------------------------------------
# Clocks
# ---------------------------------------------------------------------------


class Clock(Protocol):
    def now_ms(self) -> int: ...

    def sleep(self, seconds: float) -> None: ...

    def wall_time(self) -> str: ...


def rfc3339(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


class SystemClock:
    def now_ms(self) -> int:
        return int(time.monotonic() * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)

    def wall_time(self) -> str:
        return rfc3339(datetime.now(timezone.utc))


SIMULATION_EPOCH = datetime(2025, 3, 1, tzinfo=timezone.utc)


class SimulatedClock:
    """Integer-millisecond clock that only moves when told to."""

    def __init__(self, epoch: datetime = SIMULATION_EPOCH):
        self._epoch = epoch
        self._ms = 0

    def now_ms(self) -> int:
        return self._ms

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move the clock backwards")
        self._ms += round(seconds * 1000)

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def wall_time(self) -> str:
        return rfc3339(self._epoch + timedelta(milliseconds=self._ms))


# ---------------------------------------------------------------------------
# Retry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    backoff_factor: float = 2.0
    per_attempt_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay < 0 or self.backoff_factor < 0 or self.per_attempt_timeout <= 0:
            raise ValueError("retry delays and timeout must be non-negative")

    def delay(self, attempt: int) -> float:
        """Delay scheduled after failed ``attempt`` (1-based)."""
        return self.base_delay * self.backoff_factor ** (attempt - 1)

    def delays(self) -> list[float]:
        return [self.delay(a) for a in range(1, self.max_attempts)]


def with_retry(
    call: Callable[[], T],
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
    on_failure: Callable[[int, BaseException], None] | None = None,
) -> T:
    """Run ``call``, retrying retryable backend errors per ``policy``.

    Non-retryable errors propagate untouched on the first occurrence. When the
    attempts run out, :class:`NetworkInstability` is raised carrying the last
    error.
    """
    last: BaseException | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return call()
        except BackendError as exc:
            if not exc.retryable:
                raise
            last = exc
            if on_failure is not None:
                on_failure(attempt, exc)
            logger.debug("attempt %d/%d failed: %s", attempt, policy.max_attempts, exc)
            if attempt < policy.max_attempts:
                sleep(policy.delay(attempt))
    assert last is not None
    raise NetworkInstability(last, policy.max_attempts)


# ---------------------------------------------------------------------------
# Backend interfaces
# ---------------------------------------------------------------------------


class ChatBackend(Protocol):
    def chat_complete(self, request: ChatRequest) -> ChatResponse: ...


class ImageBackend(Protocol):
    def generate_image(self, prompt: str) -> MediaAsset: ...


class SpeechBackend(Protocol):
    def synthesize_speech(self, text: str) -> MediaAsset: ...


class MusicBackend(Protocol):
    def compose_music(self, prompt, target_duration: float) -> MediaAsset: ...


def require_text(value: str, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"{what} must be nonempty")
    return value


def count_tokens(texts: str | Sequence[str]) -> int:
    """Rough tokenizer used by the mock: words and punctuation marks."""
    if isinstance(texts, str):
        texts = [texts]
    return sum(len(re.findall(r"\w+|[^\w\s]", t)) for t in texts)
