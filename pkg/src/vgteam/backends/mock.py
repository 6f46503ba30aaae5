"""Seeded, deterministic stand-ins for the chat, image, speech and music services.

Every mock draws from its own ``random.Random`` stream keyed by
``(seed, run_id, purpose)``, so replies depend only on the script and the
request sequence of a single run, never on what other runs are doing.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from vgteam.backends.base import (
    ChatRequest,
    ChatResponse,
    MediaAsset,
    MediaKind,
    SimulatedClock,
    Usage,
    count_tokens,
    require_text,
)
from vgteam.backends.media import placeholder_png, placeholder_wav
from vgteam.errors import TransportError
from vgteam.roles import RoleId, role_from_system_prompt

SPEECH_WORDS_PER_SECOND = 2.5


@dataclass(frozen=True)
class MockScript:
    seed: int = 0
    # Per-role scripted verdicts ("approve" / "revise"), consumed by review round.
    verdicts: Mapping[str, Sequence[str]] = field(default_factory=dict)
    p_transport_error: float = 0.0
    p_refusal: float = 0.0
    p_malformed: float = 0.0
    p_revise: float = 0.0
    never_approve: bool = False
    confused_roles: tuple[str, ...] = ()
    p_moderation: float = 0.0
    moderation_terms: tuple[str, ...] = ()
    p_repetitive: float = 0.0
    chat_latency: tuple[float, float] = (0.8, 6.0)

    def __post_init__(self) -> None:
        for name in ("p_transport_error", "p_refusal", "p_malformed", "p_revise", "p_moderation", "p_repetitive"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "verdicts", {RoleId(k).value: tuple(v) for k, v in self.verdicts.items()})
        object.__setattr__(self, "confused_roles", tuple(RoleId(r).value for r in self.confused_roles))
        object.__setattr__(self, "moderation_terms", tuple(t.lower() for t in self.moderation_terms))
        lo, hi = self.chat_latency
        if not 0 <= lo <= hi:
            raise ValueError("chat_latency must be an ordered non-negative range")

    def rng(self, run_id: str, purpose: str) -> random.Random:
        return random.Random(f"{self.seed}:{run_id}:{purpose}")


def transport_error_rate_for(run_failure: float, calls: int, attempts: int) -> float:
    """Per-attempt failure probability giving ``run_failure`` post-retry.

    A run making ``calls`` independent backend calls fails when any call fails
    all ``attempts`` times: ``1 - (1 - p**attempts)**calls``.
    """
    if not 0 <= run_failure < 1:
        raise ValueError("run_failure must lie in [0, 1)")
    per_call = 1.0 - (1.0 - run_failure) ** (1.0 / calls)
    return per_call ** (1.0 / attempts)


def _quantized(rng: random.Random, lo: float, hi: float) -> float:
    """Uniform draw rounded to whole centiseconds."""
    return round(rng.uniform(lo, hi), 2)


def _sha(*parts: str) -> bytes:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()


# ---------------------------------------------------------------------------
# Chat
# ---------------------------------------------------------------------------

REFUSALS = (
    "As a text-based AI, I cannot generate images.",
    "I'm sorry, but as an AI language model I am unable to compose music.",
    "I am a text model and I cannot produce videos or pictures.",
)

_TONES = ("warm", "curious", "playful", "awe-struck", "calm", "adventurous")
_STYLES = ("watercolor", "cinematic photograph", "soft pastel", "paper-cut", "oil painting", "isometric digital art")
_SETTINGS = (
    "a misty valley at dawn",
    "a crowded city street",
    "an open field under a wide sky",
    "a quiet riverside",
    "a warm lamplit room",
    "a snowy mountain pass",
    "a sunlit coastline",
    "a bustling market square",
    "a forest clearing",
    "a rooftop at dusk",
)
_LIGHTING = (
    "golden hour light",
    "soft diffuse light",
    "dramatic rim lighting",
    "cool blue moonlight",
    "bright midday sun",
    "flickering candlelight",
    "neon glow",
    "overcast grey light",
)
_CAPTIONS = (
    "Where {kw} Begins",
    "A Closer Look at {kw}",
    "The Secret Life of {kw}",
    "{kw} in Motion",
    "Echoes of {kw}",
    "A New Side of {kw}",
    "What {kw} Teaches Us",
    "The Last Word on {kw}",
)
_OPENERS = (
    "Long before anyone noticed,",
    "Look a little closer and",
    "In the quiet moments,",
    "Scientists and storytellers agree that",
    "Every day, without fail,",
    "Against all expectations,",
)
_MIDDLES = (
    "the story of {kw} unfolds in small surprising steps",
    "{kw} reveals patterns that most of us never stop to see",
    "the world of {kw} moves to a rhythm of its own",
    "each detail of {kw} hints at a much larger journey",
    "{kw} turns an ordinary scene into something remarkable",
)
_CLOSERS = (
    "and that is only the beginning of what we will discover together.",
    "reminding us that wonder is often hiding in plain sight.",
    "so let us follow it one careful step further.",
    "while the people who watch it closely never tire of learning more.",
    "and once you have seen it, you will never look at it the same way again.",
)
_INSTRUMENTS = ("gentle piano", "warm acoustic guitar", "soft strings", "light marimba", "airy synth pads", "brushed drums")
_MOODS = ("warm", "hopeful", "mysterious", "uplifting", "calm", "playful")
_FEEDBACK = (
    "Tighten scene {k} so it matches the pacing of the rest.",
    "Make scene {k} more concrete and less generic.",
    "Scene {k} drifts off topic; bring it back to the main story.",
    "Give scene {k} a clearer visual focus.",
)


def _keywords(topic: str) -> list[str]:
    words = [w for w in re.findall(r"[A-Za-z][A-Za-z'’-]*", topic) if len(w) > 3]
    return words or ["the story"]


def _quoted(text: str) -> str | None:
    m = re.search(r"[\"“](.+?)[\"”]", text)
    return m.group(1) if m else None


class MockChat:
    def __init__(self, script: MockScript, run_id: str, clock: SimulatedClock):
        self.script = script
        self.clock = clock
        self._content = script.rng(run_id, "chat:content")
        self._faults = script.rng(run_id, "chat:faults")
        self._latency = script.rng(run_id, "chat:latency")

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        s = self.script
        if s.p_transport_error and self._faults.random() < s.p_transport_error:
            self.clock.advance(_quantized(self._latency, *s.chat_latency))
            raise TransportError("mock transport failure")
        role = role_from_system_prompt(request.messages[0].content)
        latency = _quantized(self._latency, *s.chat_latency)
        content = self._reply(role, request)
        self.clock.advance(latency)
        usage = Usage(count_tokens([m.content for m in request.messages]), count_tokens(content))
        return ChatResponse(content, usage, latency)

    # -- reply generation ---------------------------------------------------

    def _reply(self, role: RoleId, request: ChatRequest) -> str:
        s, rng = self.script, self._content
        if role.value in s.confused_roles or (s.p_refusal and rng.random() < s.p_refusal):
            return rng.choice(REFUSALS)
        if s.p_malformed and rng.random() < s.p_malformed:
            return "Sure! Here is what you asked for, I hope it helps."
        system = request.messages[0].content
        m = re.search(r"Scene count:\s*(\d+)", system)
        n = int(m.group(1)) if m else 5
        if role is RoleId.DIRECTOR:
            return self._director(request.messages[1].content, n)
        opening = request.messages[1].content
        topic = _quoted(opening) or "the story"
        if role is RoleId.EDITOR:
            return self._editor(topic, n, len(request.messages))
        if role is RoleId.PAINTER:
            return self._painter(opening, n)
        return self._composer()

    def _director(self, task: str, n: int) -> str:
        s, rng = self.script, self._content
        prompt_match = re.search(r"^USER PROMPT:\s*(.+)$", task, re.MULTILINE)
        prompt = prompt_match.group(1).strip() if prompt_match else "the user's idea"
        m = re.search(r"^TASK:\s*DIRECTIVE FOR (\w+)", task, re.MULTILINE)
        if m:
            target = m.group(1).lower()
            tone = rng.choice(_TONES)
            if target == "editor":
                return (
                    f'DIRECTIVE: Write {n} scenes telling a short story about "{prompt}".\n'
                    f"Keep the tone {tone} and build from a quiet opening to a memorable ending."
                )
            if target == "painter":
                return (
                    f'DIRECTIVE: Write one image prompt per approved caption for the video about "{prompt}".\n'
                    f"Keep one consistent {rng.choice(_STYLES)} style across all scenes."
                )
            return (
                f'DIRECTIVE: Describe background music for the video about "{prompt}".\n'
                f"It should feel {tone} and stay under the narration."
            )
        m = re.search(r"^TASK:\s*REVIEW (\w+)", task, re.MULTILINE)
        r = re.search(r"^REVIEW ROUND:\s*(\d+)", task, re.MULTILINE)
        if not m:
            return "I need a task line to work with."
        target, rnd = m.group(1).lower(), int(r.group(1)) if r else 1
        scripted = s.verdicts.get(target, ())
        if s.never_approve:
            verdict = "revise"
        elif rnd <= len(scripted):
            verdict = scripted[rnd - 1].lower()
        else:
            verdict = "revise" if (s.p_revise and rng.random() < s.p_revise) else "approve"
        if verdict == "approve":
            return "APPROVE"
        return "REVISE: " + rng.choice(_FEEDBACK).format(k=rng.randint(1, n))

    def _editor(self, topic: str, n: int, turns: int) -> str:
        rng = self._content
        kws = _keywords(topic)
        templates = list(_CAPTIONS)
        rng.shuffle(templates)
        blocks = []
        for i in range(1, n + 1):
            kw = kws[(i - 1) % len(kws)]
            caption = templates[(i - 1) % len(templates)].format(kw=kw.capitalize())
            narration = " ".join(
                (rng.choice(_OPENERS), rng.choice(_MIDDLES).format(kw=kw.lower()), rng.choice(_CLOSERS))
            )
            if turns > 3:  # a revision: vary the wording a little
                narration = narration.replace("Every day", "Season after season")
            blocks.append(f"SCENE {i}:\nCAPTION: {caption}\nNARRATION: {narration}")
        return "\n\n".join(blocks) + "\n"

    def _painter(self, opening: str, n: int) -> str:
        s, rng = self.script, self._content
        captions = re.findall(r"^\d+\.\s+(.+)$", opening.split("APPROVED CAPTIONS:", 1)[-1], re.MULTILINE)
        captions = (captions + ["a scene from the story"] * n)[:n]
        style = rng.choice(_STYLES)
        settings = rng.sample(_SETTINGS, k=min(n, len(_SETTINGS)))
        lights = rng.sample(_LIGHTING, k=min(n, len(_LIGHTING)))
        prompts = [
            f"{style} of {captions[i].lower()}, {settings[i % len(settings)]}, {lights[i % len(lights)]}"
            for i in range(n)
        ]
        if n >= 2 and s.p_repetitive and rng.random() < s.p_repetitive:
            a, b = sorted(rng.sample(range(n), 2))
            prompts[b] = prompts[a]
        return "".join(f"IMAGE {i}: {p}\n" for i, p in enumerate(prompts, start=1))

    def _composer(self) -> str:
        rng = self._content
        a, b = rng.sample(_INSTRUMENTS, 2)
        bpm = rng.randrange(60, 121, 4)
        return f"MUSIC: {a} over {b}, about {bpm} bpm, no lyrics\nMOOD: {rng.choice(_MOODS)}\n"


# ---------------------------------------------------------------------------
# Media
# ---------------------------------------------------------------------------


class _MockMedia:
    latency_range = (1.0, 3.0)

    def __init__(self, script: MockScript, run_id: str, clock: SimulatedClock, purpose: str):
        self.script = script
        self.clock = clock
        self._faults = script.rng(run_id, f"{purpose}:faults")
        self._rng = script.rng(run_id, f"{purpose}:content")

    def _attempt(self) -> float:
        latency = _quantized(self._rng, *self.latency_range)
        self.clock.advance(latency)
        if self.script.p_transport_error and self._faults.random() < self.script.p_transport_error:
            raise TransportError("mock transport failure")
        return latency


class MockImage(_MockMedia):
    latency_range = (2.0, 6.0)

    def __init__(self, script: MockScript, run_id: str, clock: SimulatedClock):
        super().__init__(script, run_id, clock, "image")

    def generate_image(self, prompt: str) -> MediaAsset:
        require_text(prompt, "image prompt")
        latency = self._attempt()
        lowered = prompt.lower()
        flagged = any(term in lowered for term in self.script.moderation_terms)
        if self.script.p_moderation and self._rng.random() < self.script.p_moderation:
            flagged = True
        data = placeholder_png(_sha(prompt))
        return MediaAsset.create(MediaKind.IMAGE, data, 0.0, flagged, latency)


def speech_duration_ms(text: str) -> int:
    """Narration length at 2.5 words per second, in whole centiseconds."""
    words = len(text.split())
    return int(round(words / SPEECH_WORDS_PER_SECOND * 100)) * 10


class MockSpeech(_MockMedia):
    latency_range = (0.5, 2.0)

    def __init__(self, script: MockScript, run_id: str, clock: SimulatedClock):
        super().__init__(script, run_id, clock, "speech")

    def synthesize_speech(self, text: str) -> MediaAsset:
        require_text(text, "narration")
        latency = self._attempt()
        ms = speech_duration_ms(text)
        return MediaAsset.create(MediaKind.NARRATION, placeholder_wav(_sha(text), ms), ms / 1000, False, latency)


class MockMusic(_MockMedia):
    latency_range = (3.0, 8.0)

    def __init__(self, script: MockScript, run_id: str, clock: SimulatedClock):
        super().__init__(script, run_id, clock, "music")

    def compose_music(self, prompt, target_duration: float) -> MediaAsset:
        if not target_duration > 0 or not math.isfinite(target_duration):
            raise ValueError("target_duration must be > 0")
        latency = self._attempt()
        ms = round(target_duration * 1000)
        data = placeholder_wav(_sha(prompt.description, prompt.mood, str(ms)), ms)
        return MediaAsset.create(MediaKind.MUSIC, data, ms / 1000, False, latency)
