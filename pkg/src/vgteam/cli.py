"""``vgteam`` command line: generate, batch, report, validate.

Exit codes: 0 success, 1 usage or configuration error, 2 the pipeline run was Invalid.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import subprocess
import sys
from pathlib import Path
from typing import Sequence

from vgteam.backends.pricing import CostLedger
from vgteam.config import AppConfig, load_config, make_backends, validate_config
from vgteam.core import Invalid, TopicClass, UserPrompt, outcome_code
from vgteam.errors import VGTeamError
from vgteam.harness import (
    PromptSet,
    ReportRow,
    build_report,
    export_report,
    format_group_table,
    run_batch,
)
from vgteam.storage import MUX_PLAN, list_runs, read_run, write_run
from vgteam.tower import default_run_id, run_pipeline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for Invalid runs here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _seed(args: argparse.Namespace) -> int:
    if args.mock:
        if args.seed is None:
            raise UsageError("--mock requires --seed")
        return args.seed
    # live runs still record a seed so the report says which one was used
    return args.seed if args.seed is not None else secrets.randbelow(2**31)


def _summary(record_id: str, outcome, metrics) -> str:
    return (
        f"run {record_id}: {outcome_code(outcome)}\n"
        f"  loops={metrics.total_loops} tokens={metrics.total_token_length} "
        f"communicate_time={metrics.communicate_time:.2f}s total_time={metrics.total_time:.2f}s "
        f"cost={format(metrics.cost, 'f')} USD"
    )


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seed = _seed(args)
    prompt = UserPrompt(args.prompt, TopicClass(args.topic) if args.topic else None)
    run_id = args.run_id or default_run_id(prompt)
    backends = make_backends(config, mock=args.mock, seed=seed, run_id=run_id)
    result = run_pipeline(prompt, config.pipeline_config(), backends, run_id)
    mode = "mock" if args.mock else "live"
    paths, _ = write_run(
        result,
        args.runs_dir,
        seed=seed,
        mode=mode,
        template=config.encoder.template(),
        length_thresholds=config.length_thresholds,
    )
    print(_summary(run_id, result.outcome, result.metrics))
    if result.transcript.error:
        print(f"  aborted: {result.transcript.error}")
    print(f"  run directory: {paths.root}")
    if isinstance(result.outcome, Invalid):
        return EXIT_INVALID
    if args.execute_mux:
        return _execute_mux(paths.root)
    return EXIT_OK


def _execute_mux(run_dir: Path) -> int:
    argv = json.loads((run_dir / MUX_PLAN).read_text(encoding="utf-8"))["argv"]
    try:
        subprocess.run(argv, cwd=run_dir, check=True, capture_output=True)
    except FileNotFoundError:
        print(f"error: encoder {argv[0]!r} not found on PATH", file=sys.stderr)
        return EXIT_USAGE
    except subprocess.CalledProcessError as exc:
        tail = exc.stderr.decode("utf-8", "replace").strip().splitlines()[-1:] if exc.stderr else []
        print(f"error: encoder exited with status {exc.returncode}: {' '.join(tail)}", file=sys.stderr)
        return EXIT_USAGE
    print(f"  video: {run_dir / 'video.mp4'}")
    return EXIT_OK


def cmd_batch(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seed = _seed(args)
    prompts = PromptSet.from_csv(args.prompts) if args.prompts else PromptSet.bundled()
    ledger = CostLedger()
    out = Path(args.out)

    def backends_for(run_id: str):
        return make_backends(config, mock=args.mock, seed=seed, run_id=run_id, ledger=ledger)

    report = run_batch(
        prompts,
        config.pipeline_config(),
        backends_for,
        args.parallelism,
        runs_dir=out / "runs",
        seed=seed,
        mode="mock" if args.mock else "live",
        template=config.encoder.template(),
        length_thresholds=config.length_thresholds,
    )
    export_report(report, out)
    if report.rows:
        print(format_group_table(report))
    print(f"{len(report.rows)} runs; reports in {out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run_dirs = list_runs(args.runs)
    if not run_dirs:
        raise UsageError(f"no run directories with a report.json under {args.runs}")
    rows, mismatched = [], []
    for run_dir in run_dirs:
        stored = read_run(run_dir)
        if not stored.digest_ok:
            mismatched.append(run_dir.name)
        r, m = stored.record, stored.record.metrics
        rows.append(
            ReportRow(
                r.prompt.text,
                r.model_id,
                r.length_class,
                outcome_code(r.outcome),
                m.total_loops,
                m.total_token_length,
                m.communicate_time,
                m.total_time,
                m.cost,
                r.run_id,
            )
        )
    report = build_report(rows, label=str(args.runs))
    print(format_group_table(report))
    if args.out:
        export_report(report, args.out)
        print(f"reports in {args.out}")
    if mismatched:
        print(f"error: transcript digest mismatch in {', '.join(mismatched)}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config: AppConfig = load_config(args.config)
    checks = validate_config(config)
    for name, ok, detail in checks:
        print(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vgteam", description="Multi-agent slideshow video generation.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_mode(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--mock", action="store_true", help="use seeded mock backends regardless of config")
        p.add_argument("--seed", type=int, help="required with --mock; recorded in every report")

    g = sub.add_parser("generate", help="run one prompt through the pipeline")
    g.add_argument("--prompt", required=True)
    g.add_argument("--topic", choices=[t.value for t in TopicClass])
    add_mode(g)
    g.add_argument("--runs-dir", default="runs")
    g.add_argument("--run-id")
    g.add_argument("--execute-mux", action="store_true", help="run the external encoder after planning")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("batch", help="run a prompt set and write report.csv/report.json/histograms.json")
    b.add_argument("--prompts", help="CSV with header text,topic_class,intended_length_class (default: bundled set)")
    add_mode(b)
    b.add_argument("--parallelism", type=int, default=1)
    b.add_argument("--out", default="batch")
    b.set_defaults(func=cmd_batch)

    r = sub.add_parser("report", help="rebuild the batch report from run directories")
    r.add_argument("--runs", required=True, help="directory holding <run_id>/ subdirectories")
    r.add_argument("--out", help="also write report files here")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "parallelism", 1) < 1:
            raise UsageError("--parallelism must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VGTeamError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
