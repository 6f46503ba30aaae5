"""Slideshow timeline, SubRip subtitles and the external-encoder plan.

All time arithmetic is done in integer milliseconds.
"""

from __future__ import annotations

import re
import shlex
import string
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from vgteam.backends.base import MediaAsset
from vgteam.errors import AssemblyError, MissingAsset, TemplateError
from vgteam.roles import SceneSet


def to_ms(seconds: float) -> int:
    return int(round(seconds * 1000))


def ms_text(ms: int) -> str:
    """Seconds with exactly three decimals, rendered without float formatting."""
    return f"{ms // 1000}.{ms % 1000:03d}"


@dataclass(frozen=True)
class Padding:
    lead: float = 0.5
    tail: float = 0.5

    def __post_init__(self) -> None:
        if self.lead < 0 or self.tail < 0:
            raise ValueError("padding must be >= 0")


@dataclass(frozen=True)
class AssetBundle:
    images: tuple[MediaAsset, ...] = ()
    narrations: tuple[MediaAsset, ...] = ()
    music: MediaAsset | None = None

    def all_assets(self) -> list[MediaAsset]:
        return [*self.images, *self.narrations, *([self.music] if self.music else [])]


@dataclass(frozen=True)
class Slide:
    scene_index: int
    image: str  # asset digest
    narration: str  # asset digest
    start_ms: int
    end_ms: int
    caption: str

    def __post_init__(self) -> None:
        if self.end_ms <= self.start_ms:
            raise ValueError(f"slide {self.scene_index}: end must be after start")

    @property
    def start(self) -> float:
        return self.start_ms / 1000

    @property
    def end(self) -> float:
        return self.end_ms / 1000

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Timeline:
    slides: tuple[Slide, ...]
    total_ms: int
    fade_out_ms: int
    lead_ms: int = 500
    tail_ms: int = 500
    music: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "slides", tuple(self.slides))
        cursor = 0
        for expected, slide in enumerate(self.slides, start=1):
            if slide.scene_index != expected or slide.start_ms != cursor:
                raise ValueError("slides must be ordered by scene and contiguous from 0")
            cursor = slide.end_ms
        if self.total_ms != cursor:
            raise ValueError("total duration must equal the end of the last slide")
        if self.slides and not 0 <= self.fade_out_ms < self.total_ms:
            raise ValueError("fade_out must be shorter than the timeline")

    @property
    def total_duration(self) -> float:
        return self.total_ms / 1000

    @property
    def fade_out(self) -> float:
        return self.fade_out_ms / 1000


def build_timeline(
    scenes: SceneSet, assets: AssetBundle, padding: Padding = Padding(), fade_out: float = 1.0
) -> Timeline:
    lead, tail = to_ms(padding.lead), to_ms(padding.tail)
    slides = []
    cursor = 0
    for i, scene in enumerate(scenes.scenes):
        if i >= len(assets.images):
            raise MissingAsset(f"scene {scene.index}: no image asset")
        if i >= len(assets.narrations):
            raise MissingAsset(f"scene {scene.index}: no narration asset")
        narration = assets.narrations[i]
        if narration.duration <= 0:
            raise MissingAsset(f"scene {scene.index}: narration has no duration")
        end = cursor + lead + to_ms(narration.duration) + tail
        slides.append(Slide(scene.index, assets.images[i].digest, narration.digest, cursor, end, scene.caption))
        cursor = end
    fade = min(to_ms(fade_out), cursor // 2) if slides else 0
    return Timeline(tuple(slides), cursor, fade, lead, tail)


def attach_music(timeline: Timeline, music: MediaAsset, strict: bool = True) -> Timeline:
    """Reference the music asset; with ``strict`` it must cover the whole timeline."""
    if strict and to_ms(music.duration) < timeline.total_ms:
        raise AssemblyError(
            f"music lasts {ms_text(to_ms(music.duration))} s but the timeline needs {ms_text(timeline.total_ms)} s"
        )
    return replace(timeline, music=music.digest)


# ---------------------------------------------------------------------------
# SubRip
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubtitleCue:
    index: int
    start_ms: int
    end_ms: int
    text: str

    def __post_init__(self) -> None:
        if self.end_ms <= self.start_ms:
            raise ValueError(f"cue {self.index}: end must be after start")


def format_timestamp(ms: int) -> str:
    if ms < 0:
        raise ValueError("negative timestamp")
    hours, rem = divmod(ms, 3_600_000)
    minutes, rem = divmod(rem, 60_000)
    seconds, millis = divmod(rem, 1000)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d},{millis:03d}"


def parse_timestamp(text: str) -> int:
    m = re.fullmatch(r"(\d{2,}):(\d{2}):(\d{2}),(\d{3})", text.strip())
    if not m:
        raise ValueError(f"bad SubRip timestamp {text!r}")
    h, mnt, s, ms = (int(g) for g in m.groups())
    if mnt > 59 or s > 59:
        raise ValueError(f"bad SubRip timestamp {text!r}")
    return ((h * 60 + mnt) * 60 + s) * 1000 + ms


def subtitle_cues(timeline: Timeline) -> list[SubtitleCue]:
    return [
        SubtitleCue(i, s.start_ms + timeline.lead_ms, s.end_ms - timeline.tail_ms, s.caption)
        for i, s in enumerate(timeline.slides, start=1)
    ]


def format_srt(cues: Sequence[SubtitleCue]) -> str:
    return "".join(
        f"{c.index}\n{format_timestamp(c.start_ms)} --> {format_timestamp(c.end_ms)}\n{c.text}\n\n" for c in cues
    )


def emit_subtitles(timeline: Timeline) -> str:
    return format_srt(subtitle_cues(timeline))


def parse_srt(text: str) -> list[SubtitleCue]:
    cues = []
    for block in re.split(r"\n\s*\n", text.replace("\r\n", "\n").strip("\n")):
        if not block.strip():
            continue
        lines = block.split("\n")
        if len(lines) < 3:
            raise ValueError(f"incomplete SubRip block: {block!r}")
        start, arrow, end = lines[1].partition(" --> ")
        if not arrow:
            raise ValueError(f"bad SubRip timing line {lines[1]!r}")
        cues.append(SubtitleCue(int(lines[0]), parse_timestamp(start), parse_timestamp(end), "\n".join(lines[2:])))
    return cues


# ---------------------------------------------------------------------------
# Encoder plan
# ---------------------------------------------------------------------------

COMMAND_PLACEHOLDERS = frozenset(
    {
        "inputs",
        "durations",
        "music",
        "subtitles",
        "output",
        "fade_out",
        "fade_start",
        "total_duration",
        "count",
        "music_index",
        "subtitles_index",
    }
)
INPUT_PLACEHOLDERS = frozenset({"path", "duration", "index"})


@dataclass(frozen=True)
class MuxTemplate:
    name: str
    command: str
    # Argument group repeated per slide where ``{inputs}`` stands alone as a token.
    input_args: str = ""


DEFAULT_TEMPLATE = MuxTemplate(
    name="ffmpeg-slideshow",
    command=(
        "ffmpeg -y -hide_banner {inputs} -i {music} -i {subtitles} "
        "-filter_complex concat=n={count}:v=1:a=0,format=yuv420p[v] "
        "-map [v] -map {music_index}:a -map {subtitles_index}:s "
        "-af afade=t=out:st={fade_start}:d={fade_out} "
        "-c:v libx264 -r 25 -c:a aac -c:s mov_text -t {total_duration} {output}"
    ),
    input_args="-loop 1 -framerate 25 -t {duration} -i {path}",
)


@dataclass(frozen=True)
class MuxInputs:
    images: tuple[str, ...]
    music: str
    subtitles: str


@dataclass(frozen=True)
class MuxPlan:
    template: str
    argv: tuple[str, ...]
    inputs: tuple[str, ...]
    output: str

    def to_dict(self) -> dict:
        return {"template": self.template, "argv": list(self.argv), "inputs": list(self.inputs), "output": self.output}


def _fields(text: str) -> list[str]:
    try:
        return [name for _, name, _, _ in string.Formatter().parse(text) if name is not None]
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from None


def template_problems(template: MuxTemplate) -> list[str]:
    """Unknown placeholders in ``template``, as human-readable messages."""
    problems = [f"unknown placeholder {{{n}}} in command" for n in _fields(template.command) if n not in COMMAND_PLACEHOLDERS]
    problems += [
        f"unknown placeholder {{{n}}} in input_args" for n in _fields(template.input_args) if n not in INPUT_PLACEHOLDERS
    ]
    return problems


def plan_mux(
    timeline: Timeline,
    asset_paths: MuxInputs,
    output_path: str,
    template: MuxTemplate = DEFAULT_TEMPLATE,
    base_dir: str | Path | None = None,
) -> MuxPlan:
    """Render the encoder argument vector; paths are kept exactly as given."""
    problems = template_problems(template)
    if problems:
        raise TemplateError("; ".join(problems))
    if len(asset_paths.images) != len(timeline.slides):
        raise MissingAsset(f"{len(timeline.slides)} slides but {len(asset_paths.images)} image paths")
    if not asset_paths.music:
        raise MissingAsset("no music path")
    if not asset_paths.subtitles:
        raise MissingAsset("no subtitle path")
    if base_dir is not None:
        for path in (*asset_paths.images, asset_paths.music, asset_paths.subtitles):
            if not (Path(base_dir) / path).is_file():
                raise MissingAsset(f"{path} does not exist in {base_dir}")

    durations = [ms_text(s.duration_ms) for s in timeline.slides]
    n = len(timeline.slides)
    scalars = {
        "inputs": ",".join(asset_paths.images),
        "durations": ",".join(durations),
        "music": asset_paths.music,
        "subtitles": asset_paths.subtitles,
        "output": output_path,
        "fade_out": ms_text(timeline.fade_out_ms),
        "fade_start": ms_text(timeline.total_ms - timeline.fade_out_ms),
        "total_duration": ms_text(timeline.total_ms),
        "count": str(n),
        "music_index": str(n),
        "subtitles_index": str(n + 1),
    }
    group = shlex.split(template.input_args)
    argv: list[str] = []
    for token in shlex.split(template.command):
        if token == "{inputs}":
            for i, (path, dur) in enumerate(zip(asset_paths.images, durations), start=1):
                if group:
                    argv.extend(t.format(path=path, duration=dur, index=i) for t in group)
                else:
                    argv.append(path)
        elif token == "{durations}":
            argv.extend(durations)
        else:
            argv.append(token.format(**scalars))
    inputs = (*asset_paths.images, asset_paths.music, asset_paths.subtitles)
    return MuxPlan(template.name, tuple(argv), inputs, output_path)


def execute_mux(plan: MuxPlan, cwd: str | Path) -> subprocess.CompletedProcess:
    """Run the plan as one external process (no shell)."""
    return subprocess.run(list(plan.argv), cwd=cwd, check=True, capture_output=True)
