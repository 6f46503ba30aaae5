"""The JSON config document and the factories that turn it into backends and pipeline settings."""

from __future__ import annotations

import json
import os
from decimal import Decimal
from pathlib import Path
from typing import Literal

import httpx
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from vgteam.assembly import DEFAULT_TEMPLATE, MuxTemplate, Padding, template_problems
from vgteam.backends import MOCK_MODEL_ID, MOCK_PRICING, Backends, mock_backends
from vgteam.backends.base import MediaKind, RetryPolicy, SystemClock
from vgteam.backends.live import Endpoint, LiveChat, LiveImage, LiveMusic, LiveSpeech
from vgteam.backends.mock import MockScript
from vgteam.backends.pricing import ChatRate, CostLedger, PricingTable
from vgteam.errors import ConfigError, RoleSpecError
from vgteam.roles import DEFAULT_REFUSAL_PATTERNS, load_role_specs
from vgteam.tower import PipelineConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EndpointSection(_Strict):
    url: str
    model: str
    # Name of the environment variable holding the key; the key itself never goes in the file.
    api_key_env: str | None = None


class BackendsSection(_Strict):
    chat: EndpointSection
    image: EndpointSection
    speech: EndpointSection
    music: EndpointSection


class RateSection(_Strict):
    prompt_rate: Decimal = Field(ge=0)
    completion_rate: Decimal = Field(ge=0)


class PricingSection(_Strict):
    models: dict[str, RateSection] = Field(default_factory=dict)
    media: dict[Literal["image", "narration", "music"], Decimal] = Field(default_factory=dict)

    def table(self) -> PricingTable:
        return PricingTable(
            {name: ChatRate(r.prompt_rate, r.completion_rate) for name, r in self.models.items()},
            {MediaKind(k): v for k, v in self.media.items()},
        )


class RetrySection(_Strict):
    max_attempts: int = Field(default=3, ge=1)
    base_delay: float = Field(default=1.0, ge=0)
    backoff_factor: float = Field(default=2.0, ge=0)
    per_attempt_timeout: float = Field(default=60.0, gt=0)

    def policy(self) -> RetryPolicy:
        return RetryPolicy(self.max_attempts, self.base_delay, self.backoff_factor, self.per_attempt_timeout)


class MockSection(_Strict):
    verdicts: dict[str, list[Literal["approve", "revise"]]] = Field(default_factory=dict)
    p_transport_error: float = Field(default=0.0, ge=0, le=1)
    p_refusal: float = Field(default=0.0, ge=0, le=1)
    p_malformed: float = Field(default=0.0, ge=0, le=1)
    p_revise: float = Field(default=0.0, ge=0, le=1)
    never_approve: bool = False
    confused_roles: list[str] = Field(default_factory=list)
    p_moderation: float = Field(default=0.0, ge=0, le=1)
    moderation_terms: list[str] = Field(default_factory=list)
    p_repetitive: float = Field(default=0.0, ge=0, le=1)
    chat_latency: tuple[float, float] = (0.8, 6.0)

    def script(self, seed: int) -> MockScript:
        return MockScript(
            seed=seed,
            verdicts={k: tuple(v) for k, v in self.verdicts.items()},
            p_transport_error=self.p_transport_error,
            p_refusal=self.p_refusal,
            p_malformed=self.p_malformed,
            p_revise=self.p_revise,
            never_approve=self.never_approve,
            confused_roles=tuple(self.confused_roles),
            p_moderation=self.p_moderation,
            moderation_terms=tuple(self.moderation_terms),
            p_repetitive=self.p_repetitive,
            chat_latency=self.chat_latency,
        )


class PipelineSection(_Strict):
    scene_count: int = Field(default=5, ge=1)
    approval_max_rounds: int = Field(default=3, ge=1)
    exchange_cap: int = Field(default=60, ge=1)
    reask_max: int = Field(default=2, ge=0)
    temperature: float = Field(default=0.7, ge=0, le=2)
    padding_lead: float = Field(default=0.5, ge=0)
    padding_tail: float = Field(default=0.5, ge=0)
    fade_out: float = Field(default=1.0, ge=0)
    repetition_threshold: float = Field(default=0.8, gt=0, le=1)
    refusal_patterns: list[str] = Field(default_factory=lambda: list(DEFAULT_REFUSAL_PATTERNS))
    short_max_words: int = Field(default=5, ge=1)
    long_min_words: int = Field(default=11, ge=2)


class EncoderSection(_Strict):
    name: str = DEFAULT_TEMPLATE.name
    command: str = DEFAULT_TEMPLATE.command
    input_args: str = DEFAULT_TEMPLATE.input_args

    def template(self) -> MuxTemplate:
        return MuxTemplate(self.name, self.command, self.input_args)


class AppConfig(_Strict):
    backends: BackendsSection
    pricing: PricingSection = Field(default_factory=PricingSection)
    retry: RetrySection = Field(default_factory=RetrySection)
    mock: MockSection = Field(default_factory=MockSection)
    pipeline: PipelineSection = Field(default_factory=PipelineSection)
    roles_dir: str | None = None
    encoder: EncoderSection = Field(default_factory=EncoderSection)
    # Set by load_config so relative paths resolve against the config file.
    base_dir: str | None = Field(default=None, exclude=True)

    @field_validator("roles_dir")
    @classmethod
    def _nonempty(cls, value: str | None) -> str | None:
        if value is not None and not value.strip():
            raise ValueError("roles_dir must not be blank")
        return value

    @property
    def model_id(self) -> str:
        return self.backends.chat.model

    @property
    def length_thresholds(self) -> tuple[int, int]:
        return self.pipeline.short_max_words, self.pipeline.long_min_words

    def roles_path(self) -> Path | None:
        if self.roles_dir is None:
            return None
        path = Path(self.roles_dir)
        return path if path.is_absolute() or self.base_dir is None else Path(self.base_dir) / path

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        if p.short_max_words >= p.long_min_words:
            raise ConfigError("pipeline.short_max_words must be below pipeline.long_min_words")
        return PipelineConfig(
            scene_count=p.scene_count,
            approval_max_rounds=p.approval_max_rounds,
            exchange_cap=p.exchange_cap,
            reask_max=p.reask_max,
            model_id=self.model_id,
            temperature=p.temperature,
            padding=Padding(p.padding_lead, p.padding_tail),
            fade_out=p.fade_out,
            repetition_threshold=p.repetition_threshold,
            refusal_patterns=tuple(p.refusal_patterns),
        )

    def pricing_table(self, *, mock: bool = False) -> PricingTable:
        table = self.pricing.table()
        if not mock:
            return table
        # Mock runs fill any gaps with placeholder rates so they always have a cost.
        fallback = MOCK_PRICING.models[MOCK_MODEL_ID]
        models = {self.model_id: fallback, **table.models}
        return PricingTable(models, {**MOCK_PRICING.media, **table.media})


def parse_config(data: dict, base_dir: str | Path | None = None) -> AppConfig:
    try:
        config = AppConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid config: {problems}") from None
    if base_dir is not None:
        config = config.model_copy(update={"base_dir": str(base_dir)})
    return config


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data, path.parent)


def make_backends(
    config: AppConfig,
    *,
    mock: bool,
    seed: int | None,
    run_id: str,
    ledger: CostLedger | None = None,
    client: httpx.Client | None = None,
) -> Backends:
    if mock:
        if seed is None:
            raise ConfigError("mock mode needs an explicit seed")
        return mock_backends(
            config.mock.script(seed),
            run_id,
            model_id=config.model_id,
            pricing=config.pricing_table(mock=True),
            retry=config.retry.policy(),
            ledger=ledger,
        )
    b = config.backends
    timeout = config.retry.per_attempt_timeout

    def endpoint(section: EndpointSection) -> Endpoint:
        return Endpoint(section.url, section.model, section.api_key_env)

    return Backends(
        chat=LiveChat(endpoint(b.chat), timeout, client),
        image=LiveImage(endpoint(b.image), timeout, client),
        speech=LiveSpeech(endpoint(b.speech), timeout, client),
        music=LiveMusic(endpoint(b.music), timeout, client),
        clock=SystemClock(),
        pricing=config.pricing_table(),
        retry=config.retry.policy(),
        ledger=ledger if ledger is not None else CostLedger(),
        mode="live",
    )


def secret_values(config: AppConfig) -> list[str]:
    """Current values of every key variable the config names (for redaction checks)."""
    names = {s.api_key_env for s in (config.backends.chat, config.backends.image, config.backends.speech, config.backends.music)}
    return [os.environ[n] for n in sorted(n for n in names if n) if os.environ.get(n)]


def validate_config(config: AppConfig) -> list[tuple[str, bool, str]]:
    """Checklist of (check, passed, detail). Never reports key values, only variable names."""
    checks: list[tuple[str, bool, str]] = [("schema", True, "config parsed")]

    try:
        config.pipeline_config()
        checks.append(("pipeline", True, "pipeline settings valid"))
    except ConfigError as exc:
        checks.append(("pipeline", False, str(exc)))

    try:
        specs = load_role_specs(config.roles_path())
        checks.append(("role specs", True, f"{len(specs)} role specs loaded"))
    except RoleSpecError as exc:
        checks.append(("role specs", False, str(exc)))

    table = config.pricing.table()
    missing = [] if config.model_id in table.models else [f"chat model {config.model_id}"]
    missing += [f"media kind {k.value}" for k in MediaKind if k not in table.media]
    checks.append(("pricing", not missing, "missing " + ", ".join(missing) if missing else "all models and media kinds priced"))

    problems = template_problems(config.encoder.template())
    checks.append(("encoder template", not problems, "; ".join(problems) or "placeholders recognized"))

    for role, section in (
        ("chat", config.backends.chat),
        ("image", config.backends.image),
        ("speech", config.backends.speech),
        ("music", config.backends.music),
    ):
        name = section.api_key_env
        if name is None:
            checks.append((f"{role} key", True, "no key configured"))
        elif os.environ.get(name):
            checks.append((f"{role} key", True, f"{name} is set"))
        else:
            checks.append((f"{role} key", False, f"{name} is not set"))
    return checks
