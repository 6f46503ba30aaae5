"""Role specialization: system prompts, output schemas and reply parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from vgteam.errors import RoleSpecError, SchemaViolation


class RoleId(str, Enum):
    DIRECTOR = "director"
    EDITOR = "editor"
    PAINTER = "painter"
    COMPOSER = "composer"


SECTION_LABELS = ("Task Objectives", "Input and Output Requirements", "Performance Standards")

# Lines each role's io_requirements must carry verbatim; the parsers below read
# exactly these shapes.
SCHEMA_LINES: dict[RoleId, tuple[str, ...]] = {
    RoleId.DIRECTOR: ("DIRECTIVE:", "APPROVE", "REVISE:"),
    RoleId.EDITOR: ("SCENE <i>:", "CAPTION:", "NARRATION:"),
    RoleId.PAINTER: ("IMAGE <i>: <image prompt>",),
    RoleId.COMPOSER: ("MUSIC:", "MOOD:"),
}


@dataclass(frozen=True)
class RoleSpec:
    role: RoleId
    task_objectives: str
    io_requirements: str
    performance_standards: str

    def __post_init__(self) -> None:
        for label, text in zip(SECTION_LABELS, self._sections()):
            if not text.strip():
                raise RoleSpecError(f"{self.role.value}: section {label!r} is empty")
        missing = [s for s in SCHEMA_LINES[self.role] if s not in self.io_requirements]
        if missing:
            raise RoleSpecError(
                f"{self.role.value}: Input and Output Requirements must embed the output schema {missing}"
            )

    def _sections(self) -> tuple[str, str, str]:
        return (self.task_objectives, self.io_requirements, self.performance_standards)


def parse_role_spec(text: str, role: RoleId, source: str = "<string>") -> RoleSpec:
    """Read a role file made of ``## <label>`` sections."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        m = re.match(r"^##\s+(.+?)\s*$", line)
        if m:
            label = m.group(1)
            if label in sections:
                raise RoleSpecError(f"{source}: duplicate section {label!r}")
            current = sections.setdefault(label, [])
            continue
        if current is not None:
            current.append(line)
    for label in SECTION_LABELS:
        if label not in sections:
            raise RoleSpecError(f"{source}: missing section {label!r}")
    bodies = ["\n".join(sections[label]).strip() for label in SECTION_LABELS]
    try:
        return RoleSpec(role, *bodies)
    except RoleSpecError as exc:
        raise RoleSpecError(f"{source}: {exc}") from None


def load_role_specs(directory: str | Path | None = None) -> dict[RoleId, RoleSpec]:
    """Load ``<role>.md`` for every role from ``directory`` (default: bundled files)."""
    specs = {}
    for role in RoleId:
        if directory is None:
            ref = resources.files("vgteam") / "data" / "roles" / f"{role.value}.md"
            text, source = ref.read_text(encoding="utf-8"), f"{role.value}.md"
        else:
            path = Path(directory) / f"{role.value}.md"
            if not path.is_file():
                raise RoleSpecError(f"{path}: role file not found")
            text, source = path.read_text(encoding="utf-8"), str(path)
        specs[role] = parse_role_spec(text, role, source)
    return specs


def build_system_prompt(spec: RoleSpec, project_context: str = "") -> str:
    parts = [f"ROLE: {spec.role.value.upper()}"]
    for label, body in zip(SECTION_LABELS, spec._sections()):
        parts.append(f"{label}:\n{body.strip()}")
    if project_context.strip():
        parts.append(f"Project Context:\n{project_context.strip()}")
    return "\n\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _single_line(value: str, what: str) -> str:
    value = value.strip()
    if not value or len(value.splitlines()) != 1:
        raise ValueError(f"{what} must be one nonempty line")
    return value


@dataclass(frozen=True)
class Scene:
    index: int
    caption: str
    narration: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("scene index starts at 1")
        object.__setattr__(self, "caption", _single_line(self.caption, "caption"))
        object.__setattr__(self, "narration", _single_line(self.narration, "narration"))


@dataclass(frozen=True)
class SceneSet:
    scenes: tuple[Scene, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenes", tuple(self.scenes))
        if [s.index for s in self.scenes] != list(range(1, len(self.scenes) + 1)):
            raise ValueError("scene indices must run 1..n")

    def __len__(self) -> int:
        return len(self.scenes)

    @property
    def captions(self) -> list[str]:
        return [s.caption for s in self.scenes]


@dataclass(frozen=True)
class ImagePromptSet:
    prompts: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompts", tuple(_single_line(p, "image prompt") for p in self.prompts))

    def __len__(self) -> int:
        return len(self.prompts)


@dataclass(frozen=True)
class MusicPrompt:
    description: str
    mood: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "description", _single_line(self.description, "music description"))
        mood = self.mood.strip()
        if len(mood.splitlines()) > 1:
            raise ValueError("mood must be one line")
        object.__setattr__(self, "mood", mood)


@dataclass(frozen=True)
class Approved:
    pass


@dataclass(frozen=True)
class RevisionRequested:
    feedback: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "feedback", _single_line(self.feedback, "feedback"))


ApprovalVerdict = Union[Approved, RevisionRequested]


# ---------------------------------------------------------------------------
# Canonical emitters (the exact shapes the parsers accept)
# ---------------------------------------------------------------------------


def format_scene_set(scenes: SceneSet) -> str:
    blocks = [f"SCENE {s.index}:\nCAPTION: {s.caption}\nNARRATION: {s.narration}" for s in scenes.scenes]
    return "\n\n".join(blocks) + "\n"


def format_image_prompts(prompts: ImagePromptSet) -> str:
    return "".join(f"IMAGE {i}: {p}\n" for i, p in enumerate(prompts.prompts, start=1))


def format_music_prompt(music: MusicPrompt) -> str:
    text = f"MUSIC: {music.description}\n"
    if music.mood:
        text += f"MOOD: {music.mood}\n"
    return text


def format_verdict(verdict: ApprovalVerdict) -> str:
    if isinstance(verdict, Approved):
        return "APPROVE\n"
    return f"REVISE: {verdict.feedback}\n"


def format_caption_block(scenes: SceneSet) -> str:
    """The caption list shared verbatim with the painter and the composer."""
    lines = "".join(f"{s.index}. {s.caption}\n" for s in scenes.scenes)
    return "APPROVED CAPTIONS:\n" + lines


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------

_SCENE_RE = re.compile(r"^\s*SCENE\s+(\d+)\s*:\s*$", re.IGNORECASE)
_FIELD_RE = re.compile(r"^\s*(CAPTION|NARRATION)\s*:(.*)$", re.IGNORECASE)
_IMAGE_RE = re.compile(r"^\s*IMAGE\s+(\d+)\s*:(.*)$", re.IGNORECASE)
_MUSIC_RE = re.compile(r"^\s*(MUSIC|MOOD)\s*:(.*)$", re.IGNORECASE)
_DIRECTIVE_RE = re.compile(r"^\s*DIRECTIVE\s*:(.*)$", re.IGNORECASE)


def _check_indices(indices: Sequence[int], expected_count: int, what: str) -> None:
    if len(indices) != expected_count:
        raise SchemaViolation(f"expected {expected_count} {what}(s), got {len(indices)}")
    if sorted(indices) != list(range(1, expected_count + 1)):
        raise SchemaViolation(f"{what} numbers must be 1..{expected_count}, got {sorted(indices)}")


def parse_scene_set(raw: str, expected_count: int) -> SceneSet:
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    found: dict[int, dict[str, str]] = {}
    order: list[int] = []
    current: int | None = None
    for line in raw.splitlines():
        m = _SCENE_RE.match(line)
        if m:
            current = int(m.group(1))
            if current in found:
                raise SchemaViolation(f"duplicate SCENE {current}", scene=current)
            found[current] = {}
            order.append(current)
            continue
        m = _FIELD_RE.match(line)
        if m:
            if current is None:
                raise SchemaViolation(f"{m.group(1).upper()} line before any SCENE header")
            key = m.group(1).upper()
            if key in found[current]:
                raise SchemaViolation(f"scene {current}: duplicate {key}", scene=current)
            found[current][key] = m.group(2).strip()
    for index in order:
        fields = found[index]
        for key in ("CAPTION", "NARRATION"):
            if not fields.get(key):
                raise SchemaViolation(f"scene {index}: missing or empty {key}", scene=index)
    _check_indices(order, expected_count, "scene")
    return SceneSet(tuple(Scene(i, found[i]["CAPTION"], found[i]["NARRATION"]) for i in sorted(order)))


def parse_image_prompts(raw: str, expected_count: int) -> ImagePromptSet:
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    found: dict[int, str] = {}
    for line in raw.splitlines():
        m = _IMAGE_RE.match(line)
        if not m:
            continue
        index, text = int(m.group(1)), m.group(2).strip()
        if index in found:
            raise SchemaViolation(f"duplicate IMAGE {index}", scene=index)
        if not text:
            raise SchemaViolation(f"IMAGE {index} has an empty prompt", scene=index)
        found[index] = text
    _check_indices(list(found), expected_count, "image prompt")
    return ImagePromptSet(tuple(found[i] for i in sorted(found)))


def parse_music_prompt(raw: str) -> MusicPrompt:
    fields: dict[str, str] = {}
    for line in raw.splitlines():
        m = _MUSIC_RE.match(line)
        if not m:
            continue
        key = m.group(1).upper()
        if key in fields:
            raise SchemaViolation(f"duplicate {key} line")
        fields[key] = m.group(2).strip()
    if not fields.get("MUSIC"):
        raise SchemaViolation("missing or empty MUSIC line")
    return MusicPrompt(fields["MUSIC"], fields.get("MOOD", ""))


def parse_verdict(raw: str) -> ApprovalVerdict:
    first = next((line.strip() for line in raw.splitlines() if line.strip()), "")
    if first.upper() == "APPROVE":
        return Approved()
    m = re.match(r"^REVISE\s*:(.*)$", first, re.IGNORECASE)
    if m and m.group(1).strip():
        return RevisionRequested(m.group(1).strip())
    raise SchemaViolation("verdict must start with 'APPROVE' or 'REVISE: <feedback>'")


def parse_directive(raw: str) -> str:
    """Everything after the first ``DIRECTIVE:`` marker, including later lines."""
    lines = raw.splitlines()
    for i, line in enumerate(lines):
        m = _DIRECTIVE_RE.match(line)
        if m:
            text = "\n".join([m.group(1)] + lines[i + 1:]).strip()
            if not text:
                raise SchemaViolation("empty DIRECTIVE")
            return text
    raise SchemaViolation("missing DIRECTIVE line")


# ---------------------------------------------------------------------------
# Character confusion
# ---------------------------------------------------------------------------

DEFAULT_REFUSAL_PATTERNS: tuple[str, ...] = (
    "i cannot",
    "i can't",
    "i am unable",
    "i'm unable",
    "as an ai",
    "as a text-based ai",
    "as a language model",
    "unable to generate images",
    "cannot generate images",
    "i am a text",
    "i'm a text",
    "i am only able to",
)

CONFUSION_WINDOW = 200

# Lines in a role's output schema never count as refusals.
_SCHEMA_LINE_RE = re.compile(
    r"^\s*(SCENE\s+\d+\s*:|CAPTION\s*:|NARRATION\s*:|IMAGE\s+\d+\s*:|MUSIC\s*:|MOOD\s*:|DIRECTIVE\s*:|REVISE\s*:|APPROVE\b)",
    re.IGNORECASE,
)


def _pattern_regex(pattern: str) -> re.Pattern[str]:
    escaped = re.escape(pattern.lower()).replace("'", "['’]")
    return re.compile(rf"(?<!\w){escaped}(?!\w)")


def detect_confusion(
    raw: str, patterns: Iterable[str] = DEFAULT_REFUSAL_PATTERNS, window: int = CONFUSION_WINDOW
) -> bool:
    """True when the opening of a reply reads like an agent refusing its role.

    Only the first ``window`` characters are inspected, lines written in the
    output schema are skipped, and patterns match on word boundaries.
    """
    head = raw[:window]
    free_text = "\n".join(line for line in head.splitlines() if not _SCHEMA_LINE_RE.match(line)).lower()
    return any(_pattern_regex(p).search(free_text) for p in patterns)


def role_from_system_prompt(text: str) -> RoleId:
    m = re.match(r"^ROLE:\s*(\w+)", text)
    if not m:
        raise ValueError("system prompt has no ROLE header")
    return RoleId(m.group(1).lower())


def build_system_prompts(specs: Mapping[RoleId, RoleSpec], project_context: str) -> dict[RoleId, str]:
    return {role: build_system_prompt(specs[role], project_context) for role in RoleId}
