"""Run directory layout: ``runs/<run_id>/{transcript.jsonl, assets/, subtitles.srt, mux_plan.json, report.json}``."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from vgteam.assembly import (
    DEFAULT_TEMPLATE,
    MuxInputs,
    MuxPlan,
    MuxTemplate,
    emit_subtitles,
    plan_mux,
)
from vgteam.backends.base import MediaAsset, MediaKind
from vgteam.core import RunRecord, classify_prompt_length
from vgteam.errors import IoFailure
from vgteam.tower import PipelineResult
from vgteam.transcript import Transcript

TRANSCRIPT = "transcript.jsonl"
REPORT = "report.json"
SUBTITLES = "subtitles.srt"
MUX_PLAN = "mux_plan.json"
ASSETS = "assets"
VIDEO = "video.mp4"


def asset_name(kind: MediaKind, scene: int | None = None) -> str:
    if kind is MediaKind.MUSIC:
        return "music.wav"
    ext = "png" if kind is MediaKind.IMAGE else "wav"
    return f"{kind.value}_{scene:02d}.{ext}"


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def transcript(self) -> Path:
        return self.root / TRANSCRIPT

    @property
    def report(self) -> Path:
        return self.root / REPORT

    @property
    def subtitles(self) -> Path:
        return self.root / SUBTITLES

    @property
    def mux_plan(self) -> Path:
        return self.root / MUX_PLAN

    @property
    def assets(self) -> Path:
        return self.root / ASSETS


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def dump_json(data: object) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def run_record(
    result: PipelineResult, transcript_digest: str, length_thresholds: tuple[int, int] = (5, 11), **extra: object
) -> RunRecord:
    return RunRecord(
        run_id=result.run_id,
        prompt=result.prompt,
        length_class=classify_prompt_length(result.prompt.text, *length_thresholds),
        model_id=result.transcript.model_id,
        metrics=result.metrics,
        outcome=result.outcome,
        transcript_digest=transcript_digest,
        extra={"terminal_state": result.terminal_state.value, **extra},
    )


def write_run(
    result: PipelineResult,
    runs_dir: str | Path,
    *,
    seed: int | None = None,
    mode: str = "mock",
    template: MuxTemplate = DEFAULT_TEMPLATE,
    length_thresholds: tuple[int, int] = (5, 11),
) -> tuple[RunPaths, RunRecord]:
    """Persist one run. Always writes the transcript and report; media only for non-Invalid runs."""
    paths = RunPaths(Path(runs_dir) / result.run_id)
    try:
        paths.root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {paths.root}: {exc.strerror or exc}") from exc
    transcript_digest = result.transcript.write(paths.transcript)

    plan: MuxPlan | None = None
    if result.assets is not None and result.timeline is not None:
        paths.assets.mkdir(exist_ok=True)
        images = []
        for i, image in enumerate(result.assets.images, start=1):
            images.append(_save_asset(paths, image, asset_name(MediaKind.IMAGE, i)))
        for i, narration in enumerate(result.assets.narrations, start=1):
            _save_asset(paths, narration, asset_name(MediaKind.NARRATION, i))
        music = _save_asset(paths, result.assets.music, asset_name(MediaKind.MUSIC))
        _write_text(paths.subtitles, emit_subtitles(result.timeline))
        plan = plan_mux(result.timeline, MuxInputs(tuple(images), music, SUBTITLES), VIDEO, template, paths.root)
        _write_text(paths.mux_plan, dump_json(plan.to_dict()))

    record = run_record(result, transcript_digest, length_thresholds, seed=seed, mode=mode)
    _write_text(paths.report, dump_json(record.to_dict()))
    return paths, record


def _save_asset(paths: RunPaths, asset: MediaAsset | None, name: str) -> str:
    if asset is None:
        raise IoFailure(f"no asset to write as {name}")
    _write_bytes(paths.assets / name, asset.data)
    return f"{ASSETS}/{name}"


@dataclass(frozen=True)
class StoredRun:
    paths: RunPaths
    record: RunRecord
    transcript: Transcript

    @property
    def digest_ok(self) -> bool:
        return self.transcript.digest == self.record.transcript_digest


def read_run(run_dir: str | Path) -> StoredRun:
    paths = RunPaths(Path(run_dir))
    try:
        record = RunRecord.from_dict(json.loads(paths.report.read_text(encoding="utf-8")))
        transcript = Transcript.read(paths.transcript)
    except OSError as exc:
        raise IoFailure(f"cannot read run directory {run_dir}: {exc.strerror or exc}") from exc
    return StoredRun(paths, record, transcript)


def list_runs(runs_dir: str | Path) -> list[Path]:
    root = Path(runs_dir)
    if not root.is_dir():
        raise IoFailure(f"{root} is not a directory")
    return sorted(p for p in root.iterdir() if (p / REPORT).is_file())
