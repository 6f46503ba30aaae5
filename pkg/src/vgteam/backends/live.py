"""HTTP clients for OpenAI-compatible chat and simple JSON media endpoints."""

from __future__ import annotations

import base64
import json
import os
import time
from dataclasses import dataclass

import httpx

from vgteam.backends.base import (
    ChatRequest,
    ChatResponse,
    MediaAsset,
    MediaKind,
    Usage,
    require_text,
)
from vgteam.backends.media import wav_duration
from vgteam.errors import (
    AuthError,
    ConfigError,
    MalformedResponse,
    ModerationRejection,
    TransportError,
)


@dataclass(frozen=True)
class Endpoint:
    url: str
    model: str
    api_key_env: str | None = None

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        return key


class _HttpBackend:
    def __init__(self, endpoint: Endpoint, timeout: float = 60.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = client or httpx.Client()

    def _post(self, payload: dict) -> httpx.Response:
        headers = {"Content-Type": "application/json"}
        key = self.endpoint.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(self.endpoint.url, json=payload, headers=headers, timeout=self.timeout)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise TransportError(f"{type(exc).__name__} talking to {self.endpoint.url}") from None
        if resp.status_code in (401, 403):
            raise AuthError(f"{self.endpoint.url} rejected the credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.endpoint.url} answered HTTP {resp.status_code}")
        if resp.status_code == 400 and _is_moderation(resp):
            raise ModerationRejection(f"{self.endpoint.url} rejected the prompt by content policy")
        if resp.status_code >= 400:
            raise MalformedResponse(f"{self.endpoint.url} answered HTTP {resp.status_code}")
        return resp

    def _json(self, resp: httpx.Response) -> dict:
        try:
            data = resp.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise MalformedResponse(f"{self.endpoint.url} returned a non-JSON body") from None
        if not isinstance(data, dict):
            raise MalformedResponse(f"{self.endpoint.url} returned JSON that is not an object")
        return data


def _is_moderation(resp: httpx.Response) -> bool:
    try:
        err = resp.json().get("error") or {}
    except (ValueError, AttributeError):
        return False
    code = str(err.get("code") or err.get("type") or "")
    return "content_policy" in code or "moderation" in code


class LiveChat(_HttpBackend):
    """``POST {model, messages, temperature}``; content and usage from ``choices[0]``."""

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id,
            "messages": [m.wire() for m in request.messages],
            "temperature": request.temperature,
        }
        start = time.perf_counter()
        resp = self._post(payload)
        latency = time.perf_counter() - start
        data = self._json(resp)
        try:
            content = data["choices"][0]["message"]["content"]
            usage = data.get("usage") or {}
            result = Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (KeyError, IndexError, TypeError, ValueError):
            raise MalformedResponse("chat response lacks choices[0].message.content") from None
        if not isinstance(content, str):
            raise MalformedResponse("chat content is not text")
        return ChatResponse(content, result, latency)


class LiveImage(_HttpBackend):
    """``POST {model, prompt, response_format: b64_json}`` -> ``data[0].b64_json``."""

    def generate_image(self, prompt: str) -> MediaAsset:
        require_text(prompt, "image prompt")
        start = time.perf_counter()
        resp = self._post({"model": self.endpoint.model, "prompt": prompt, "response_format": "b64_json"})
        latency = time.perf_counter() - start
        data = self._json(resp)
        try:
            item = data["data"][0]
            raw = base64.b64decode(item["b64_json"], validate=True)
        except (KeyError, IndexError, TypeError, ValueError):
            raise MalformedResponse("image response lacks data[0].b64_json") from None
        flagged = bool(item.get("moderation_flagged") or data.get("moderation_flagged"))
        return MediaAsset.create(MediaKind.IMAGE, raw, 0.0, flagged, latency)


class LiveSpeech(_HttpBackend):
    """``POST {model, input, response_format: wav}`` -> WAV bytes."""

    voice = "alloy"

    def synthesize_speech(self, text: str) -> MediaAsset:
        require_text(text, "narration")
        start = time.perf_counter()
        resp = self._post({"model": self.endpoint.model, "input": text, "voice": self.voice, "response_format": "wav"})
        latency = time.perf_counter() - start
        return MediaAsset.create(MediaKind.NARRATION, resp.content, _audio_duration(resp.content), False, latency)


class LiveMusic(_HttpBackend):
    """``POST {model, prompt, duration}`` -> WAV bytes at least ``duration`` long."""

    def compose_music(self, prompt, target_duration: float) -> MediaAsset:
        if not target_duration > 0:
            raise ValueError("target_duration must be > 0")
        text = prompt.description if not prompt.mood else f"{prompt.description} (mood: {prompt.mood})"
        start = time.perf_counter()
        resp = self._post({"model": self.endpoint.model, "prompt": text, "duration": target_duration, "format": "wav"})
        latency = time.perf_counter() - start
        return MediaAsset.create(MediaKind.MUSIC, resp.content, _audio_duration(resp.content), False, latency)


def _audio_duration(data: bytes) -> float:
    try:
        duration = wav_duration(data)
    except Exception:
        raise MalformedResponse("audio response is not a readable WAV file") from None
    if duration <= 0:
        raise MalformedResponse("audio response is empty")
    return duration
