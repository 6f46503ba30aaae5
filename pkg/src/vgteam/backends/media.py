"""Tiny deterministic media encoders for placeholder assets."""

from __future__ import annotations

import io
import random
import struct
import wave
import zlib

WAV_RATE = 1000  # samples/s; 1 sample == 1 ms keeps durations exact


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    body = tag + payload
    return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


def placeholder_png(seed: bytes, width: int = 32, height: int = 18) -> bytes:
    """A two-tone RGB PNG whose colours come from ``seed``."""
    top, bottom = seed[0:3].ljust(3, b"\0"), seed[3:6].ljust(3, b"\0")
    rows = []
    for y in range(height):
        rows.append(b"\0" + (top if y < height // 2 else bottom) * width)
    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(b"".join(rows), 9))
        + _png_chunk(b"IEND", b"")
    )


def placeholder_wav(seed: bytes, duration_ms: int) -> bytes:
    """Low-level 8-bit mono noise, ``duration_ms`` samples long."""
    if duration_ms <= 0:
        raise ValueError("duration must be positive")
    noise = random.Random(seed).randbytes(duration_ms)
    samples = bytes(124 + (b & 7) for b in noise)
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(WAV_RATE)
        w.writeframes(samples)
    return buf.getvalue()


def wav_duration(data: bytes) -> float:
    with wave.open(io.BytesIO(data), "rb") as w:
        return w.getnframes() / w.getframerate()
