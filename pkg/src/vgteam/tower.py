"""The Chat Tower: a strictly sequential director -> editor -> painter -> composer dialogue.

The user's prompt only ever reaches the director. The director writes one
directive per downstream agent, reviews each agent's draft, and sends
feedback until it approves or a loop limit fires. Every exchange goes through
:func:`record_exchange`, so run metrics can be recomputed from the log alone.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Generic, Mapping, TypeVar

from vgteam.assembly import (
    AssetBundle,
    Padding,
    Timeline,
    attach_music,
    build_timeline,
    to_ms,
)
from vgteam.backends import Backends
from vgteam.backends.base import (
    ChatMessage,
    ChatRequest,
    MediaAsset,
    MediaKind,
    Usage,
    with_retry,
)
from vgteam.backends.media import placeholder_png
from vgteam.core import (
    InappropriateFlag,
    ModerationFlagged,
    Outcome,
    RunMetrics,
    TerminalState,
    UserPrompt,
    classify_outcome,
    detect_repetitive_visuals,
)
from vgteam.errors import (
    AuthError,
    CharacterConfusion,
    ConfigError,
    LoopCapExceeded,
    MalformedResponse,
    MissingArtifact,
    ModerationRejection,
    NetworkInstability,
    SchemaViolation,
)
from vgteam.roles import (
    DEFAULT_REFUSAL_PATTERNS,
    ApprovalVerdict,
    Approved,
    ImagePromptSet,
    MusicPrompt,
    RoleId,
    RoleSpec,
    SceneSet,
    build_system_prompts,
    detect_confusion,
    format_caption_block,
    load_role_specs,
    parse_directive,
    parse_image_prompts,
    parse_music_prompt,
    parse_scene_set,
    parse_verdict,
)
from vgteam.transcript import (
    NORMALIZED_WALL_TIME,
    Direction,
    ExchangeCounters,
    MediaCall,
    Message,
    Transcript,
    chat_pairs,
)

logger = logging.getLogger("vgteam.tower")

T = TypeVar("T")

# 3 directives + 3 drafts + 3 verdicts
HAPPY_PATH_EXCHANGES = 9

SCENE_SET = "scene_set"
IMAGE_PROMPTS = "image_prompts"
MUSIC_PROMPT = "music_prompt"


@dataclass(frozen=True)
class PipelineConfig:
    scene_count: int = 5
    approval_max_rounds: int = 3
    exchange_cap: int = 60
    reask_max: int = 2
    model_id: str = "mock-chat"
    temperature: float = 0.7
    padding: Padding = Padding()
    fade_out: float = 1.0
    repetition_threshold: float = 0.8
    refusal_patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS

    def __post_init__(self) -> None:
        for name in ("scene_count", "approval_max_rounds", "exchange_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.reask_max < 0:
            raise ConfigError("reask_max must be >= 0")
        if self.exchange_cap <= HAPPY_PATH_EXCHANGES:
            raise ConfigError(f"exchange_cap must exceed the {HAPPY_PATH_EXCHANGES}-exchange happy path")
        if not self.refusal_patterns:
            raise ConfigError("refusal_patterns must not be empty")
        if not 0 < self.repetition_threshold <= 1:
            raise ConfigError("repetition_threshold must lie in (0, 1]")
        if not self.model_id:
            raise ConfigError("model_id is required")

    @property
    def project_context(self) -> str:
        return f"Scene count: {self.scene_count}"


# ---------------------------------------------------------------------------
# Memory stream
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectiveRecord:
    role: RoleId
    text: str
    seq: int


@dataclass(frozen=True)
class ApprovedArtifact:
    kind: str
    value: object
    seq: int  # the reply it was parsed from


@dataclass(frozen=True)
class FollowUp:
    role: RoleId
    kind: str  # "feedback" | "reask"
    text: str
    after_seq: int  # the reply being followed up
    sources: tuple[str, ...]


@dataclass(frozen=True)
class DirectorTask:
    kind: str  # "directive" | "review"
    target: RoleId
    opened_at: int  # message count when the task was opened
    round: int = 0
    draft_seq: int = 0


class MemoryStream:
    """Append-only log of messages plus an index of directives, feedback and approvals."""

    def __init__(self, run_id: str, user_prompt: str, system_prompts: Mapping[RoleId, str]):
        self.run_id = run_id
        self.user_prompt = user_prompt
        self.system_prompts = dict(system_prompts)
        self._messages: list[Message] = []
        self._events: list[object] = []
        self.counters = ExchangeCounters()

    @property
    def messages(self) -> tuple[Message, ...]:
        return tuple(self._messages)

    @property
    def events(self) -> tuple[object, ...]:
        return tuple(self._events)

    def _append_message(self, message: Message) -> None:
        if message.seq != len(self._messages) + 1:
            raise ValueError("message seq must continue the log")
        self._messages.append(message)

    def message(self, seq: int) -> Message:
        return self._messages[seq - 1]

    # -- writers ------------------------------------------------------------

    def add_directive(self, role: RoleId, text: str, seq: int) -> None:
        if role is RoleId.DIRECTOR:
            raise ValueError("the director does not direct itself")
        self._events.append(DirectiveRecord(role, text, seq))

    def approve(self, kind: str, value: object, seq: int) -> None:
        self._events.append(ApprovedArtifact(kind, value, seq))

    def add_followup(self, followup: FollowUp) -> None:
        self._events.append(followup)

    def open_director_task(self, kind: str, target: RoleId, round: int = 0, draft_seq: int = 0) -> DirectorTask:
        task = DirectorTask(kind, target, len(self._messages), round, draft_seq)
        self._events.append(task)
        return task

    def record_media(self, call: MediaCall) -> None:
        self._events.append(call)

    # -- readers ------------------------------------------------------------

    def _latest(self, kind: type, pred: Callable[[object], bool] = lambda e: True):
        for event in reversed(self._events):
            if isinstance(event, kind) and pred(event):
                return event
        return None

    def directive(self, role: RoleId) -> DirectiveRecord | None:
        return self._latest(DirectiveRecord, lambda e: e.role is role)

    def approved(self, kind: str) -> ApprovedArtifact | None:
        return self._latest(ApprovedArtifact, lambda e: e.kind == kind)

    def current_director_task(self) -> DirectorTask | None:
        return self._latest(DirectorTask)

    def followups(self, role: RoleId) -> list[FollowUp]:
        return [e for e in self._events if isinstance(e, FollowUp) and e.role is role]

    def media_calls(self) -> list[MediaCall]:
        return [e for e in self._events if isinstance(e, MediaCall)]


# ---------------------------------------------------------------------------
# Context rendering
# ---------------------------------------------------------------------------

_AGENT_TASKS = {
    RoleId.EDITOR: "WRITE THE SCRIPT",
    RoleId.PAINTER: "WRITE THE IMAGE PROMPTS",
    RoleId.COMPOSER: "WRITE THE MUSIC PROMPT",
}


def _captions(memory: MemoryStream, for_role: RoleId) -> str:
    approved = memory.approved(SCENE_SET)
    if approved is None:
        raise MissingArtifact(f"{for_role.value} needs the approved captions, none yet")
    return format_caption_block(approved.value)


def _director_opening(memory: MemoryStream, task: DirectorTask) -> tuple[str, tuple[str, ...]]:
    target = task.target.value.upper()
    if task.kind == "directive":
        text = f"TASK: DIRECTIVE FOR {target}\nUSER PROMPT: {memory.user_prompt}\n"
        sources: tuple[str, ...] = ("tower", "user")
        if task.target is not RoleId.EDITOR:
            text += "\n" + _captions(memory, RoleId.DIRECTOR)
            sources += ("editor",)
        text += f'\nWrite the directive for the {task.target.value}. Start your reply with "DIRECTIVE:".\n'
        return text, sources
    draft = memory.message(task.draft_seq)
    text = (
        f"TASK: REVIEW {target} DRAFT\n"
        f"REVIEW ROUND: {task.round}\n"
        f"USER PROMPT: {memory.user_prompt}\n\n"
        f"ARTIFACT UNDER REVIEW:\n{draft.content.rstrip()}\n\n"
        "Reply with APPROVE, or with REVISE: <feedback> on the first line.\n"
    )
    return text, ("tower", "user", task.target.value)


def _agent_opening(memory: MemoryStream, role: RoleId) -> tuple[str, tuple[str, ...]]:
    directive = memory.directive(role)
    if directive is None:
        raise MissingArtifact(f"no directive for the {role.value} yet")
    text = f"TASK: {_AGENT_TASKS[role]}\nDIRECTIVE FROM THE DIRECTOR:\n{directive.text}\n"
    sources: tuple[str, ...] = ("tower", "director")
    if role in (RoleId.PAINTER, RoleId.COMPOSER):
        text += "\n" + _captions(memory, role)
        sources += ("editor",)
    text += "\nReply in the format given in your Input and Output Requirements.\n"
    return text, sources


def render_context(memory: MemoryStream, for_role: RoleId) -> list[ChatMessage]:
    """Chat messages for ``for_role``'s next request; the last one is the new user turn."""
    if for_role is RoleId.DIRECTOR:
        task = memory.current_director_task()
        if task is None:
            raise MissingArtifact("the director has no open task")
        opening, sources = _director_opening(memory, task)
        start = task.opened_at
    else:
        opening, sources = _agent_opening(memory, for_role)
        start = 0
    turns = [ChatMessage("system", memory.system_prompts[for_role], ("tower",)), ChatMessage("user", opening, sources)]
    pending = {f.after_seq: f for f in memory.followups(for_role) if f.after_seq > start}
    pairs = [p for p in chat_pairs(memory.messages[start:]) if p[0].agent is for_role]
    for _, reply in pairs:
        turns.append(ChatMessage("assistant", reply.content, (for_role.value,)))
        followup = pending.get(reply.seq)
        if followup is None:
            raise MissingArtifact(f"nothing pending for the {for_role.value} after message {reply.seq}")
        turns.append(ChatMessage("user", followup.text, followup.sources))
    return turns


def record_exchange(
    memory: MemoryStream,
    agent: RoleId,
    request: ChatMessage,
    reply: str,
    usage: Usage,
    latency: float,
    request_time: str = NORMALIZED_WALL_TIME,
    reply_time: str = NORMALIZED_WALL_TIME,
) -> ExchangeCounters:
    seq = len(memory.messages) + 1
    latency_ms = to_ms(latency)
    memory._append_message(
        Message(memory.run_id, seq, agent, Direction.REQUEST, request.content, wall_time=request_time, sources=request.sources)
    )
    memory._append_message(
        Message(
            memory.run_id,
            seq + 1,
            agent,
            Direction.REPLY,
            reply,
            usage.prompt_tokens,
            usage.completion_tokens,
            latency_ms,
            reply_time,
            (agent.value,),
        )
    )
    memory.counters = memory.counters.add(usage, latency_ms)
    return memory.counters


def feedback_text(feedback: str) -> str:
    return f"DIRECTOR FEEDBACK: {feedback}\n\nRevise your previous reply accordingly and answer again in the required format.\n"


def reask_text(problem: str) -> str:
    return (
        f"Your previous reply could not be used: {problem}\n"
        "Answer again, following your Input and Output Requirements exactly.\n"
    )


@dataclass(frozen=True)
class ApprovalResult(Generic[T]):
    artifact: T
    rounds_used: int
    seq: int


def approval_loop(
    produce: Callable[[], tuple[T, int]],
    review: Callable[[int, int], ApprovalVerdict],
    memory: MemoryStream,
    max_rounds: int,
    role: RoleId,
) -> ApprovalResult[T]:
    """Alternate produce/review until approval; feedback lands in memory for the next draft.

    ``produce`` returns ``(artifact, reply_seq)``; ``review`` receives
    ``(round, reply_seq)``. Raises :class:`LoopCapExceeded` after
    ``max_rounds`` rejected drafts.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    for rnd in range(1, max_rounds + 1):
        artifact, seq = produce()
        verdict = review(rnd, seq)
        if isinstance(verdict, Approved):
            return ApprovalResult(artifact, rnd, seq)
        memory.add_followup(FollowUp(role, "feedback", feedback_text(verdict.feedback), seq, ("director", "tower")))
    raise LoopCapExceeded(f"the director rejected {max_rounds} {role.value} drafts", role.value, max_rounds)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineResult:
    run_id: str
    prompt: UserPrompt
    transcript: Transcript
    metrics: RunMetrics
    outcome: Outcome
    terminal_state: TerminalState
    scene_set: SceneSet | None = None
    image_prompts: ImagePromptSet | None = None
    music_prompt: MusicPrompt | None = None
    assets: AssetBundle | None = None
    timeline: Timeline | None = None
    flags: tuple[InappropriateFlag, ...] = ()
    memory: MemoryStream | None = field(default=None, compare=False, repr=False)


def default_run_id(prompt: UserPrompt) -> str:
    return "run-" + hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:12]


class ChatTower:
    """One pipeline run. Not reusable and not thread-safe; create one per run."""

    def __init__(
        self,
        prompt: UserPrompt,
        config: PipelineConfig,
        backends: Backends,
        run_id: str | None = None,
        roles: Mapping[RoleId, RoleSpec] | None = None,
    ):
        self.prompt = prompt
        self.config = config
        self.backends = backends
        self.run_id = run_id or default_run_id(prompt)
        specs = roles if roles is not None else load_role_specs()
        self.memory = MemoryStream(self.run_id, prompt.text, build_system_prompts(specs, config.project_context))
        self.cost = Decimal(0)
        self.flags: list[InappropriateFlag] = []
        self.scene_set: SceneSet | None = None
        self.image_prompts: ImagePromptSet | None = None
        self.music_prompt: MusicPrompt | None = None
        self.assets: AssetBundle | None = None
        self.timeline: Timeline | None = None

    # -- one chat exchange, with re-asks --------------------------------------

    def _call_chat(self, request: ChatRequest):
        b = self.backends
        return with_retry(lambda: b.chat.chat_complete(request), b.retry, b.clock.sleep)

    def exchange(self, role: RoleId, parse: Callable[[str], T]) -> tuple[T, int]:
        cfg, b = self.config, self.backends
        for attempt in range(cfg.reask_max + 1):
            if self.memory.counters.total_loops >= cfg.exchange_cap:
                raise LoopCapExceeded(f"exchange cap of {cfg.exchange_cap} reached", role.value)
            context = render_context(self.memory, role)
            request = ChatRequest(cfg.model_id, tuple(context), cfg.temperature)
            sent_at = b.clock.wall_time()
            response = self._call_chat(request)
            record_exchange(
                self.memory, role, context[-1], response.content, response.usage, response.latency,
                sent_at, b.clock.wall_time(),
            )
            reply_seq = len(self.memory.messages)
            self.cost += b.ledger.record_chat(self.run_id, cfg.model_id, response.usage, b.pricing)
            if detect_confusion(response.content, cfg.refusal_patterns):
                problem = "it reads as a refusal of your role; you can do this task in text"
                if attempt == cfg.reask_max:
                    raise CharacterConfusion(f"the {role.value} refused its role", role.value)
            else:
                try:
                    return parse(response.content), reply_seq
                except SchemaViolation as exc:
                    problem = str(exc)
                    if attempt == cfg.reask_max:
                        raise CharacterConfusion(
                            f"the {role.value} kept breaking its output format: {exc}", role.value
                        ) from exc
            self.memory.add_followup(FollowUp(role, "reask", reask_text(problem), reply_seq, ("tower",)))
        raise AssertionError("unreachable")

    # -- conceptualization -----------------------------------------------------

    def _directive(self, target: RoleId) -> None:
        self.memory.open_director_task("directive", target)
        text, seq = self.exchange(RoleId.DIRECTOR, parse_directive)
        self.memory.add_directive(target, text, seq)

    def _approve(self, role: RoleId, kind: str, parse: Callable[[str], T]) -> T:
        def review(rnd: int, draft_seq: int) -> ApprovalVerdict:
            self.memory.open_director_task("review", role, rnd, draft_seq)
            verdict, _ = self.exchange(RoleId.DIRECTOR, parse_verdict)
            return verdict

        result = approval_loop(
            lambda: self.exchange(role, parse), review, self.memory, self.config.approval_max_rounds, role
        )
        self.memory.approve(kind, result.artifact, result.seq)
        return result.artifact

    def conceptualize(self) -> None:
        n = self.config.scene_count
        self._directive(RoleId.EDITOR)
        self.scene_set = self._approve(RoleId.EDITOR, SCENE_SET, lambda raw: parse_scene_set(raw, n))
        self._directive(RoleId.PAINTER)
        self.image_prompts = self._approve(RoleId.PAINTER, IMAGE_PROMPTS, lambda raw: parse_image_prompts(raw, n))
        self._directive(RoleId.COMPOSER)
        self.music_prompt = self._approve(RoleId.COMPOSER, MUSIC_PROMPT, parse_music_prompt)

    # -- creation --------------------------------------------------------------

    def _media(self, kind: MediaKind, scene: int | None, call: Callable[[], MediaAsset]) -> MediaAsset:
        b = self.backends
        try:
            asset = with_retry(call, b.retry, b.clock.sleep)
        except ModerationRejection:
            # the service refused the prompt; keep the slide with a blank card
            asset = MediaAsset.create(MediaKind.IMAGE, placeholder_png(b"\x20\x20\x20\x20\x20\x20"), 0.0, True)
        self.memory.record_media(MediaCall(kind, scene, asset.digest, asset.moderation_flagged, to_ms(asset.latency)))
        self.cost += b.ledger.record_media(self.run_id, kind, b.pricing)
        return asset

    def create(self) -> None:
        assert self.scene_set and self.image_prompts and self.music_prompt
        b, cfg = self.backends, self.config
        images, narrations = [], []
        for scene, image_prompt in zip(self.scene_set.scenes, self.image_prompts.prompts):
            image = self._media(MediaKind.IMAGE, scene.index, lambda p=image_prompt: b.image.generate_image(p))
            if image.moderation_flagged:
                self.flags.append(ModerationFlagged(scene.index))
            images.append(image)
            narrations.append(
                self._media(MediaKind.NARRATION, scene.index, lambda t=scene.narration: b.speech.synthesize_speech(t))
            )
        bundle = AssetBundle(tuple(images), tuple(narrations))
        timeline = build_timeline(self.scene_set, bundle, cfg.padding, cfg.fade_out)
        music_prompt = self.music_prompt
        music = self._media(
            MediaKind.MUSIC, None, lambda: b.music.compose_music(music_prompt, timeline.total_duration)
        )
        self.timeline = attach_music(timeline, music, strict=b.mode == "mock")
        self.assets = AssetBundle(bundle.images, bundle.narrations, music)
        self.flags.extend(detect_repetitive_visuals(self.image_prompts.prompts, cfg.repetition_threshold))

    # -- whole run ---------------------------------------------------------------

    def run(self) -> PipelineResult:
        clock = self.backends.clock
        started = clock.now_ms()
        terminal, error = TerminalState.COMPLETED, None
        try:
            self.conceptualize()
            self.create()
        except (NetworkInstability, AuthError, MalformedResponse) as exc:
            terminal, error = TerminalState.ABORTED_NETWORK, str(exc)
        except CharacterConfusion as exc:
            terminal, error = TerminalState.ABORTED_CONFUSION, str(exc)
        except LoopCapExceeded as exc:
            terminal, error = TerminalState.ABORTED_LOOP_CAP, str(exc)
        if error:
            logger.info("run %s aborted: %s", self.run_id, error)

        counters = self.memory.counters
        total_ms = max(clock.now_ms() - started, counters.communicate_ms)
        metrics = RunMetrics(
            counters.total_loops, counters.total_token_length, counters.communicate_ms / 1000, total_ms / 1000, self.cost
        )
        flags = tuple(self.flags) if terminal is TerminalState.COMPLETED else ()
        outcome = classify_outcome(terminal, flags)
        transcript = Transcript(
            self.run_id,
            self.memory.messages,
            terminal,
            self.config.model_id,
            metrics,
            outcome,
            tuple(self.memory.media_calls()),
            error,
        )
        completed = terminal is TerminalState.COMPLETED
        return PipelineResult(
            run_id=self.run_id,
            prompt=self.prompt,
            transcript=transcript,
            metrics=metrics,
            outcome=outcome,
            terminal_state=terminal,
            scene_set=self.scene_set,
            image_prompts=self.image_prompts,
            music_prompt=self.music_prompt,
            assets=self.assets if completed else None,
            timeline=self.timeline if completed else None,
            flags=flags,
            memory=self.memory,
        )


def run_pipeline(
    prompt: UserPrompt,
    config: PipelineConfig,
    backends: Backends,
    run_id: str | None = None,
    roles: Mapping[RoleId, RoleSpec] | None = None,
) -> PipelineResult:
    return ChatTower(prompt, config, backends, run_id, roles).run()
