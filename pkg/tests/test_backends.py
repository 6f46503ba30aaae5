import base64
import json
import math
import threading
from decimal import Decimal

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vgteam.backends import MOCK_PRICING, mock_backends
from vgteam.backends.base import (
    ChatMessage,
    ChatRequest,
    MediaAsset,
    MediaKind,
    RetryPolicy,
    SimulatedClock,
    Usage,
    count_tokens,
    with_retry,
)
from vgteam.backends.live import Endpoint, LiveChat, LiveImage, LiveMusic, LiveSpeech
from vgteam.backends.media import placeholder_png, placeholder_wav, wav_duration
from vgteam.backends.mock import (
    MockScript,
    speech_duration_ms,
    transport_error_rate_for,
)
from vgteam.backends.pricing import (
    ChatRate,
    CostLedger,
    PricingTable,
    chat_cost,
    cost_of,
    mean_cost_per_video,
)
from vgteam.errors import (
    AuthError,
    ConfigError,
    MalformedResponse,
    ModerationRejection,
    NetworkInstability,
    TransportError,
    UnknownModel,
)
from vgteam.roles import MusicPrompt

# ---------------------------------------------------------------------------
# Retry
# ---------------------------------------------------------------------------


@given(st.integers(1, 6), st.integers(1, 10), st.floats(0, 5), st.floats(0, 3))
def test_retry_count_law(max_attempts, first_success, base, factor):
    policy = RetryPolicy(max_attempts, base, factor)
    calls, slept = [], []

    def call():
        calls.append(1)
        if len(calls) < first_success:
            raise TransportError("flaky")
        return "ok"

    if first_success <= max_attempts:
        assert with_retry(call, policy, slept.append) == "ok"
    else:
        with pytest.raises(NetworkInstability) as info:
            with_retry(call, policy, slept.append)
        assert info.value.attempts == max_attempts
    assert len(calls) == min(max_attempts, first_success)
    failed = len(calls) if first_success > max_attempts else len(calls) - 1
    # no sleep after the final failed attempt
    expected = [base * factor ** (i - 1) for i in range(1, min(failed, max_attempts - 1) + 1)]
    assert slept == pytest.approx(expected)


def test_default_retry_schedule():
    assert RetryPolicy().delays() == [1.0, 2.0]


def test_non_retryable_errors_pass_through_immediately():
    calls = []

    def call():
        calls.append(1)
        raise AuthError("bad key")

    with pytest.raises(AuthError):
        with_retry(call, RetryPolicy(), lambda s: None)
    assert len(calls) == 1


def test_retry_failure_hook_sees_each_failed_attempt():
    seen = []

    def always_fails():
        raise TransportError("x")

    with pytest.raises(NetworkInstability):
        with_retry(always_fails, RetryPolicy(), lambda s: None, lambda attempt, exc: seen.append(attempt))
    assert seen == [1, 2, 3]


# ---------------------------------------------------------------------------
# Pricing
# ---------------------------------------------------------------------------

RATES = PricingTable({"m": ChatRate("1.0", "2.0"), "half": ChatRate("0.5", "0")}, {"image": "0.04"})


def test_chat_cost_examples():
    assert cost_of(Usage(120, 80), RATES, "m") == Decimal("0.00028")
    assert str(cost_of(Usage(120, 80), RATES, "m").normalize()) == "0.00028"
    assert cost_of(Usage(1_000_000, 0), RATES, "half") == Decimal("0.50")
    assert cost_of(MediaKind.IMAGE, RATES) == Decimal("0.04")


def test_unknown_model_and_media():
    with pytest.raises(UnknownModel, match="nope"):
        chat_cost("nope", Usage(1, 1), RATES)
    with pytest.raises(UnknownModel):
        cost_of(MediaKind.MUSIC, RATES)


def test_mean_cost_per_video():
    assert mean_cost_per_video(Decimal("10.30"), 100) == Decimal("0.103")
    assert mean_cost_per_video(Decimal("1"), 0) is None


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)), max_size=50))
def test_ledger_is_exact(usages):
    ledger = CostLedger()
    for p, c in usages:
        ledger.record_chat("r", "m", Usage(p, c), RATES)
    expected = sum((Decimal(p) * 1 + Decimal(c) * 2 for p, c in usages), Decimal(0)) / Decimal(10**6)
    assert ledger.total() == expected


def test_ledger_concurrent_appends():
    ledger = CostLedger()

    def work(run):
        for _ in range(500):
            ledger.record_media(run, MediaKind.IMAGE, RATES)

    threads = [threading.Thread(target=work, args=(f"r{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(ledger.entries) == 4000
    assert ledger.total() == Decimal("160.00")
    assert ledger.total("r3") == Decimal("20.00")


def test_pricing_round_trip():
    assert PricingTable.from_dict(MOCK_PRICING.to_dict()) == MOCK_PRICING


# ---------------------------------------------------------------------------
# Mock backends
# ---------------------------------------------------------------------------


def test_transport_rate_oracle():
    # per attempt p with 1 - (1 - p**3)**20 = 0.1; computed independently and frozen
    p = transport_error_rate_for(0.1, calls=20, attempts=3)
    assert p == pytest.approx(0.17384738092103053, abs=1e-12)
    assert 1 - (1 - p**3) ** 20 == pytest.approx(0.1, abs=1e-12)


def test_speech_pacing_is_two_and_a_half_words_per_second():
    assert speech_duration_ms("one two three four five") == 2000
    assert speech_duration_ms("a b c d e f g h") == 3200


def test_mock_music_matches_target_and_is_deterministic():
    b1 = mock_backends(MockScript(seed=1), "run-x")
    b2 = mock_backends(MockScript(seed=1), "run-x")
    m1 = b1.music.compose_music(MusicPrompt("piano"), 9.2)
    m2 = b2.music.compose_music(MusicPrompt("piano"), 9.2)
    assert m1.duration == 9.2
    assert wav_duration(m1.data) == 9.2
    assert m1.digest == m2.digest
    with pytest.raises(ValueError):
        b1.music.compose_music(MusicPrompt("piano"), 0)


def test_mock_image_moderation_terms():
    b = mock_backends(MockScript(seed=1, moderation_terms=("blood",)), "run-x")
    assert b.image.generate_image("a field of blood red poppies").moderation_flagged
    assert not b.image.generate_image("a field of poppies").moderation_flagged


def test_mock_chat_is_seed_and_run_scoped():
    def replies(seed, run_id):
        b = mock_backends(MockScript(seed=seed), run_id)
        req = ChatRequest(
            "mock-chat",
            (
                ChatMessage("system", "ROLE: DIRECTOR\n\nProject Context:\nScene count: 3\n"),
                ChatMessage("user", "TASK: DIRECTIVE FOR EDITOR\nUSER PROMPT: Why Do Cats Stare\n"),
            ),
        )
        return [b.chat.chat_complete(req) for _ in range(3)]

    assert replies(3, "run-0001") == replies(3, "run-0001")
    assert replies(3, "run-0001") != replies(4, "run-0001")
    first = replies(3, "run-0001")[0]
    assert first.content.startswith("DIRECTIVE:")
    assert first.usage.completion_tokens == count_tokens(first.content)
    assert first.latency == round(first.latency, 2)


def test_simulated_clock():
    clock = SimulatedClock()
    clock.advance(1.234)
    clock.sleep(2)
    assert clock.now_ms() == 3234
    assert clock.wall_time() == "2025-03-01T00:00:03.234Z"


def test_media_asset_validation():
    with pytest.raises(ValueError):
        MediaAsset(MediaKind.IMAGE, b"x", 0.0, False, "0" * 64)
    with pytest.raises(ValueError):
        MediaAsset.create(MediaKind.NARRATION, b"x", 0.0)
    with pytest.raises(ValueError):
        MediaAsset.create(MediaKind.IMAGE, b"x", 1.0)


def test_placeholders_are_deterministic():
    assert placeholder_png(b"abcdef") == placeholder_png(b"abcdef")
    assert placeholder_png(b"abcdef").startswith(b"\x89PNG")
    assert wav_duration(placeholder_wav(b"s", 1234)) == 1.234


# ---------------------------------------------------------------------------
# Live clients against a fake transport
# ---------------------------------------------------------------------------


def _client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


def _request() -> ChatRequest:
    return ChatRequest("gpt-x", (ChatMessage("system", "ROLE: EDITOR\n"), ChatMessage("user", "hi")), 0.5)


def test_live_chat_wire_format(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-secret-value")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(
            200,
            json={"choices": [{"message": {"content": "SCENE 1:"}}], "usage": {"prompt_tokens": 12, "completion_tokens": 3}},
        )

    chat = LiveChat(Endpoint("https://llm.test/v1/chat/completions", "gpt-x", "TEST_KEY"), client=_client(handler))
    resp = chat.chat_complete(_request())
    assert resp.content == "SCENE 1:"
    assert resp.usage == Usage(12, 3)
    assert resp.latency >= 0
    assert seen["auth"] == "Bearer sk-secret-value"
    assert seen["body"] == {
        "model": "gpt-x",
        "messages": [{"role": "system", "content": "ROLE: EDITOR\n"}, {"role": "user", "content": "hi"}],
        "temperature": 0.5,
    }


@pytest.mark.parametrize(
    "status,body,error",
    [
        (401, {}, AuthError),
        (403, {}, AuthError),
        (429, {}, TransportError),
        (503, {}, TransportError),
        (404, {}, MalformedResponse),
        (400, {"error": {"code": "content_policy_violation"}}, ModerationRejection),
        (200, {"unexpected": True}, MalformedResponse),
    ],
)
def test_live_chat_error_mapping(status, body, error):
    chat = LiveChat(Endpoint("https://llm.test", "m"), client=_client(lambda r: httpx.Response(status, json=body)))
    with pytest.raises(error):
        chat.chat_complete(_request())


def test_live_transport_failure_is_retryable():
    def handler(request):
        raise httpx.ConnectError("boom")

    chat = LiveChat(Endpoint("https://llm.test", "m"), client=_client(handler))
    with pytest.raises(TransportError) as info:
        chat.chat_complete(_request())
    assert info.value.retryable


def test_live_missing_key_is_config_error(monkeypatch):
    monkeypatch.delenv("NOT_SET_ANYWHERE", raising=False)
    chat = LiveChat(Endpoint("https://llm.test", "m", "NOT_SET_ANYWHERE"), client=_client(lambda r: httpx.Response(200)))
    with pytest.raises(ConfigError, match="NOT_SET_ANYWHERE"):
        chat.chat_complete(_request())


def test_live_media_clients():
    png = placeholder_png(b"abcdef")
    wav = placeholder_wav(b"x", 1500)

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        if "response_format" in body and body["response_format"] == "b64_json":
            return httpx.Response(200, json={"data": [{"b64_json": base64.b64encode(png).decode()}]})
        return httpx.Response(200, content=wav)

    client = _client(handler)
    image = LiveImage(Endpoint("https://img.test", "i"), client=client).generate_image("a cat")
    assert image.data == png and image.duration == 0.0
    speech = LiveSpeech(Endpoint("https://tts.test", "s"), client=client).synthesize_speech("hello there")
    assert math.isclose(speech.duration, 1.5)
    music = LiveMusic(Endpoint("https://music.test", "m"), client=client).compose_music(MusicPrompt("piano", "calm"), 1.5)
    assert music.kind is MediaKind.MUSIC

    bad = _client(lambda r: httpx.Response(200, content=b"not audio"))
    with pytest.raises(MalformedResponse):
        LiveSpeech(Endpoint("https://tts.test", "s"), client=bad).synthesize_speech("hello")
