import json
from pathlib import Path

import pytest

from vgteam.backends import mock_backends
from vgteam.backends.mock import MockScript
from vgteam.core import UserPrompt
from vgteam.tower import PipelineConfig, run_pipeline

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "src" / "vgteam" / "data" / "default_config.json"


def config_dict(**overrides):
    data = json.loads(DEFAULT_CONFIG.read_text(encoding="utf-8"))
    for key, value in overrides.items():
        data[key] = value
    return data


@pytest.fixture
def write_config(tmp_path):
    def write(data=None, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data if data is not None else config_dict()), encoding="utf-8")
        return path

    return write


def mock_run(text="Why Do Cats Stare", config=None, run_id="run-0001", **script):
    script.setdefault("seed", 7)
    backends = mock_backends(MockScript(**script), run_id)
    return run_pipeline(UserPrompt(text), config or PipelineConfig(), backends, run_id)


# Published per-run figures for ten animal-topic prompts:
# (prompt, total_loops, total_token_length, communicate_time_s, total_time_s)
PUBLISHED_ROWS = [
    ("This owl’s head-turning trick is both creepy and amazing—here’s how it works", 22, 419, 169.42, 275.97),
    ("How dolphins communicate using clicks, whistles, and underwater body language", 24, 547, 1214.34, 1364.73),
    ("Following a baby elephant’s journey from rescue to rewilding", 32, 668, 170.72, 279.82),
    ("What your dog’s tail movements actually mean according to science", 44, 1078, 203.11, 313.98),
    ("The incredible migration of monarch butterflies through three countries and generations", 22, 440, 182.38, 287.07),
    ("One Paw at a Time", 26, 502, 159.94, 255.80),
    ("Silent Hunters of Night", 22, 571, 163.03, 283.93),
    ("In the Lion’s Shadow", 22, 585, 163.70, 299.47),
    ("Penguins in a Desert", 24, 543, 157.18, 260.35),
    ("Why Do Cats Stare", 22, 361, 136.61, 239.50),
]


def published_rows(model="gpt-4o-mini"):
    from vgteam.core import classify_prompt_length
    from vgteam.harness import ReportRow

    return [
        ReportRow(text, model, classify_prompt_length(text), "appropriate", loops, tokens, comm, total)
        for text, loops, tokens, comm, total in PUBLISHED_ROWS
    ]


def pytest_terminal_summary(terminalreporter):
    results = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            props = dict(getattr(report, "user_properties", ()))
            if "criterion" not in props or (report.when != "call" and status == "passed"):
                continue
            verdict = {"passed": "PASS", "skipped": "SKIP"}.get(status, "FAIL")
            title, verdicts = results.setdefault(props["criterion"], (props["title"], []))
            verdicts.append(verdict)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, verdicts = results[number]
        verdict = "FAIL" if "FAIL" in verdicts else "SKIP" if set(verdicts) == {"SKIP"} else "PASS"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
