"""Batch runs, per-group statistics, histograms and report export."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, Decimal
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from vgteam.assembly import DEFAULT_TEMPLATE, MuxTemplate
from vgteam.backends import Backends
from vgteam.backends.pricing import mean_cost_per_video
from vgteam.core import (
    LengthClass,
    TopicClass,
    UserPrompt,
    classify_prompt_length,
    outcome_code,
)
from vgteam.errors import EmptyInput, IoFailure
from vgteam.storage import dump_json, write_run
from vgteam.tower import PipelineConfig, PipelineResult, run_pipeline

PROMPT_HEADER = ["text", "topic_class", "intended_length_class"]
REPORT_HEADER = [
    "user_input",
    "model",
    "length_class",
    "outcome",
    "total_loops",
    "total_token_length",
    "communicate_time_s",
    "total_time_s",
    "cost_usd",
]
CATEGORIES = ("appropriate", "inappropriate", "invalid")
METRICS = ("token_length", "loops", "communicate_time", "total_time")
DEFAULT_WIDTHS: Mapping[str, float] = {"token_length": 500, "loops": 5, "communicate_time": 50, "total_time": 100}


# ---------------------------------------------------------------------------
# Prompt sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptEntry:
    prompt: UserPrompt
    intended_length: LengthClass


@dataclass(frozen=True)
class PromptSet:
    entries: tuple[PromptEntry, ...]
    label: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def parse_csv(cls, text: str, label: str = "") -> "PromptSet":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != PROMPT_HEADER:
            raise ValueError(f"{label or 'prompt set'}: header must be {','.join(PROMPT_HEADER)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{label or 'prompt set'} line {lineno}: expected 3 fields, got {len(row)}")
            text_, topic, length = row
            try:
                entries.append(PromptEntry(UserPrompt(text_, TopicClass(topic)), LengthClass(length)))
            except ValueError as exc:
                raise ValueError(f"{label or 'prompt set'} line {lineno}: {exc}") from None
        return cls(tuple(entries), label)

    @classmethod
    def from_csv(cls, path: str | Path) -> "PromptSet":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read prompt set {path}: {exc.strerror or exc}") from None
        return cls.parse_csv(text, str(path))

    @classmethod
    def bundled(cls) -> "PromptSet":
        text = (resources.files("vgteam") / "data" / "prompts.csv").read_text(encoding="utf-8")
        return cls.parse_csv(text, "bundled illustrative prompt set")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(PROMPT_HEADER)
        for e in self.entries:
            topic = e.prompt.topic_class.value if e.prompt.topic_class else ""
            writer.writerow([e.prompt.text, topic, e.intended_length.value])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Rows and statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    user_input: str
    model: str
    length_class: LengthClass
    outcome: str  # outcome_code form, e.g. "invalid:network_instability"
    total_loops: int
    total_token_length: int
    communicate_time: float
    total_time: float
    cost: Decimal = Decimal(0)
    run_id: str = field(default="", compare=False)

    @property
    def category(self) -> str:
        return self.outcome.split(":", 1)[0]

    def metric(self, name: str) -> float:
        if name == "token_length":
            return self.total_token_length
        if name == "loops":
            return self.total_loops
        if name == "communicate_time":
            return self.communicate_time
        if name == "total_time":
            return self.total_time
        raise KeyError(f"unknown metric {name!r}; expected one of {', '.join(METRICS)}")

    def csv_cells(self) -> list[str]:
        return [
            self.user_input,
            self.model,
            self.length_class.value,
            self.outcome,
            str(self.total_loops),
            str(self.total_token_length),
            f"{self.communicate_time:.2f}",
            f"{self.total_time:.2f}",
            format(self.cost, "f"),
        ]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "user_input": self.user_input,
            "model": self.model,
            "length_class": self.length_class.value,
            "outcome": self.outcome,
            "total_loops": self.total_loops,
            "total_token_length": self.total_token_length,
            "communicate_time": self.communicate_time,
            "total_time": self.total_time,
            "cost": format(self.cost, "f"),
        }


def row_from_result(result: PipelineResult, length_thresholds: tuple[int, int] = (5, 11)) -> ReportRow:
    m = result.metrics
    return ReportRow(
        user_input=result.prompt.text,
        model=result.transcript.model_id,
        length_class=classify_prompt_length(result.prompt.text, *length_thresholds),
        outcome=outcome_code(result.outcome),
        total_loops=m.total_loops,
        total_token_length=m.total_token_length,
        communicate_time=m.communicate_time,
        total_time=m.total_time,
        cost=m.cost,
        run_id=result.run_id,
    )


@dataclass(frozen=True)
class GroupStats:
    key: str
    n: int
    mean_token_length: float
    mean_loops: float
    mean_communicate_time: float
    mean_total_time: float
    counts: Mapping[str, int]

    @property
    def fractions(self) -> dict[str, float]:
        return {c: self.counts.get(c, 0) / self.n for c in CATEGORIES}

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "n": self.n,
            "mean_token_length": self.mean_token_length,
            "mean_loops": self.mean_loops,
            "mean_communicate_time": self.mean_communicate_time,
            "mean_total_time": self.mean_total_time,
            "counts": {c: self.counts.get(c, 0) for c in CATEGORIES},
            "fractions": self.fractions,
        }


GROUPINGS: Mapping[str, Callable[[ReportRow], str]] = {
    "overall": lambda r: "overall",
    "length_class": lambda r: r.length_class.value,
    "model": lambda r: r.model,
}


def group_stats(key: str, rows: Sequence[ReportRow]) -> GroupStats:
    if not rows:
        raise EmptyInput(f"group {key!r} has no rows")
    n = len(rows)
    counts = Counter(r.category for r in rows)
    return GroupStats(
        key=key,
        n=n,
        mean_token_length=math.fsum(r.total_token_length for r in rows) / n,
        mean_loops=math.fsum(r.total_loops for r in rows) / n,
        mean_communicate_time=math.fsum(r.communicate_time for r in rows) / n,
        mean_total_time=math.fsum(r.total_time for r in rows) / n,
        counts={c: counts.get(c, 0) for c in CATEGORIES},
    )


def aggregate(rows: Iterable[ReportRow], group_by: str | Callable[[ReportRow], str] = "overall") -> list[GroupStats]:
    rows = list(rows)
    if not rows:
        raise EmptyInput("no rows to aggregate")
    selector = GROUPINGS[group_by] if isinstance(group_by, str) else group_by
    groups: dict[str, list[ReportRow]] = {}
    for row in rows:
        groups.setdefault(selector(row), []).append(row)
    return [group_stats(k, groups[k]) for k in sorted(groups)]


@dataclass(frozen=True)
class HistogramBuckets:
    metric: str
    width: float
    buckets: tuple[tuple[float, int], ...]  # (interval start, count), half-open [start, start + width)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.buckets)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "width": self.width, "buckets": [[s, c] for s, c in self.buckets]}


def _bucket_index(value: float, width: Decimal) -> int:
    # exact decimal floor, so a value on a boundary never slips into the bucket below
    return int((Decimal(repr(value)) / width).to_integral_value(rounding=ROUND_FLOOR))


def bucket_histogram(rows: Iterable[ReportRow], metric: str, width: float) -> HistogramBuckets:
    if not width > 0:
        raise ValueError("width must be > 0")
    if metric not in METRICS:
        raise KeyError(f"unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
    w = Decimal(repr(width))
    counts = Counter(_bucket_index(r.metric(metric), w) for r in rows)
    if not counts:
        return HistogramBuckets(metric, width, ())
    lo, hi = min(counts), max(counts)
    buckets = tuple((float(i * w), counts.get(i, 0)) for i in range(lo, hi + 1))
    return HistogramBuckets(metric, width, buckets)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchReport:
    rows: tuple[ReportRow, ...]
    groups: Mapping[str, tuple[GroupStats, ...]]
    histograms: Mapping[str, tuple[HistogramBuckets, ...]]
    total_cost: Decimal
    mean_cost: Decimal | None  # over non-Invalid runs
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "runs": len(self.rows),
            "total_cost": format(self.total_cost, "f"),
            "mean_cost_per_video": None if self.mean_cost is None else format(self.mean_cost, "f"),
            "groups": {k: [g.to_dict() for g in v] for k, v in self.groups.items()},
            "rows": [r.to_dict() for r in self.rows],
            "histograms": self.histograms_dict(),
        }

    def histograms_dict(self) -> dict:
        return {k: [h.to_dict() for h in v] for k, v in self.histograms.items()}


def build_report(
    rows: Iterable[ReportRow], widths: Mapping[str, float] = DEFAULT_WIDTHS, label: str = ""
) -> BatchReport:
    rows = tuple(rows)
    groups: dict[str, tuple[GroupStats, ...]] = {}
    histograms: dict[str, tuple[HistogramBuckets, ...]] = {}
    if rows:
        for name in GROUPINGS:
            groups[name] = tuple(aggregate(rows, name))
        for name, selector in GROUPINGS.items():
            for key in sorted({selector(r) for r in rows}):
                members = [r for r in rows if selector(r) == key]
                histograms[f"{name}:{key}"] = tuple(bucket_histogram(members, m, widths[m]) for m in METRICS)
    total = sum((r.cost for r in rows), Decimal(0))
    videos = sum(1 for r in rows if r.category != "invalid")
    return BatchReport(rows, groups, histograms, total, mean_cost_per_video(total, videos), label)


def run_batch(
    prompts: PromptSet,
    config: PipelineConfig,
    backends_for: Callable[[str], Backends],
    parallelism: int = 1,
    *,
    runs_dir: str | Path | None = None,
    seed: int | None = None,
    mode: str = "mock",
    template: MuxTemplate = DEFAULT_TEMPLATE,
    length_thresholds: tuple[int, int] = (5, 11),
    widths: Mapping[str, float] = DEFAULT_WIDTHS,
) -> BatchReport:
    """One pipeline per prompt on a pool of ``parallelism`` workers.

    ``backends_for(run_id)`` must return backends whose randomness depends
    only on the run id, which is what makes the report order-independent.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(index: int, entry: PromptEntry) -> ReportRow:
        run_id = f"run-{index:04d}"
        result = run_pipeline(entry.prompt, config, backends_for(run_id), run_id)
        if runs_dir is not None:
            write_run(result, runs_dir, seed=seed, mode=mode, template=template, length_thresholds=length_thresholds)
        return row_from_result(result, length_thresholds)

    jobs = list(enumerate(prompts.entries, start=1))
    if parallelism == 1:
        rows = [one(i, e) for i, e in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(lambda job: one(*job), jobs))
    rows.sort(key=lambda r: r.run_id)
    return build_report(rows, widths, prompts.label)


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------


def report_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow(row.csv_cells())
    return buf.getvalue()


def parse_report_csv(text: str) -> list[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    if next(reader, None) != REPORT_HEADER:
        raise ValueError("report CSV header does not match")
    rows = []
    for cells in reader:
        if not cells:
            continue
        user_input, model, length, outcome, loops, tokens, comm, total, cost = cells
        rows.append(
            ReportRow(
                user_input, model, LengthClass(length), outcome, int(loops), int(tokens), float(comm), float(total), Decimal(cost)
            )
        )
    return rows


def read_report_csv(path: str | Path) -> list[ReportRow]:
    try:
        return parse_report_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def export_report(report: BatchReport, out_dir: str | Path, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    out = Path(out_dir)
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report formats: {', '.join(sorted(unknown))}")
    files: list[tuple[Path, str]] = []
    if "csv" in formats:
        files.append((out / "report.csv", report_csv(report.rows)))
    if "json" in formats:
        files.append((out / "report.json", dump_json(report.to_dict())))
        files.append((out / "histograms.json", dump_json(report.histograms_dict())))
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for path, text in files:
            path.write_text(text, encoding="utf-8", newline="\n")
            written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc.strerror or exc}") from None
    return written


def format_group_table(report: BatchReport) -> str:
    """Plain-text table of every group, for terminal output."""
    lines = [f"{'group':<24}{'n':>5}{'tokens':>10}{'loops':>8}{'comm s':>10}{'total s':>10}{'ok':>7}{'inapp':>7}{'invalid':>8}"]
    for name, stats in report.groups.items():
        for g in stats:
            f = g.fractions
            lines.append(
                f"{name + ':' + g.key:<24}{g.n:>5}{g.mean_token_length:>10.1f}{g.mean_loops:>8.2f}"
                f"{g.mean_communicate_time:>10.2f}{g.mean_total_time:>10.2f}"
                f"{f['appropriate']:>7.3f}{f['inappropriate']:>7.3f}{f['invalid']:>8.3f}"
            )
    mean = "n/a" if report.mean_cost is None else format(report.mean_cost.quantize(Decimal("0.000001")), "f")
    lines.append(f"total cost {format(report.total_cost, 'f')} USD; mean per generated video {mean} USD")
    return "\n".join(lines)


def load_report_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
