"""Mono 16-bit PCM WAV I/O on top of the stdlib :mod:`wave` module."""

from __future__ import annotations

import io
import logging
import wave
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
_FULL_SCALE = 32767.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono float samples in [-1, 1] at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("audio buffer must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise ValueError("audio samples must be finite and within [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


def write_wav(audio: AudioBuffer) -> bytes:
    """Encode as RIFF/WAVE, PCM 16-bit little-endian, mono."""
    pcm = np.round(audio.samples * _FULL_SCALE).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def read_wav(data: bytes, target_rate: int = SAMPLE_RATE) -> AudioBuffer:
    """Decode 16-bit PCM WAV bytes; resample linearly to ``target_rate``.

    Multi-channel input is averaged to mono.
    """
    with wave.open(io.BytesIO(data), "rb") as w:
        if w.getsampwidth() != 2:
            raise ValueError(f"only 16-bit PCM is supported (got {8 * w.getsampwidth()}-bit)")
        channels = w.getnchannels()
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _FULL_SCALE
    if channels > 1:
        logger.warning("averaging %d channels to mono", channels)
        pcm = pcm.reshape(-1, channels).mean(axis=1)
    pcm = np.clip(pcm, -1.0, 1.0)
    if rate != target_rate:
        logger.warning("resampling %d Hz input to %d Hz (linear)", rate, target_rate)
        n_out = int(round(pcm.size * target_rate / rate))
        t_out = np.arange(n_out) / target_rate
        pcm = np.interp(t_out, np.arange(pcm.size) / rate, pcm)
    return AudioBuffer(pcm, target_rate)
