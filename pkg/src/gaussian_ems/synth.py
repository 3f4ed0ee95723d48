"""Deterministic harmonic-plus-noise violin note synthesizer.

Each note is a bank of up to 12 harmonics with geometric magnitudes, a
sinusoidal vibrato and a dB-domain envelope. The envelope and spectrum are
solved so that the note's measured features (see ``audio_features``) land on
the denormalized render parameters.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from . import kernels
from .audio_features import HOP_S, MAX_HARMONICS, WINDOW_S
from .expression import DenormTable, RenderParams
from .score_io import Score
from .wavio import SAMPLE_RATE, AudioBuffer, write_wav

logger = logging.getLogger(__name__)

__all__ = [
    "DenormTable",
    "SynthError",
    "synth_note",
    "render_audio",
    "write_wav",
    "decay_for_centroid",
]

MIN_DURATION = 0.05
FADE_S = 0.005
TAIL_S = 0.1
NOISE_REL = 10.0 ** (-60.0 / 20.0)
NORMALIZE_PEAK = 0.9
_R_MAX = 1e3
# Smallest peak-to-end envelope drop; keeps the peak frame unambiguous.
MIN_DEPTH_DB = 0.5


class SynthError(ValueError):
    pass


def harmonic_count(f0: float, sample_rate: int) -> int:
    return max(1, min(MAX_HARMONICS, int(math.floor(0.5 * sample_rate / f0))))


def _centroid(r: float, n_harm: int) -> float:
    h = np.arange(1, n_harm + 1)
    a = r ** (h - 1.0)
    return float(np.dot(h, a) / a.sum())


def decay_for_centroid(target: float, n_harm: int, tol: float = 1e-6) -> float:
    """Geometric decay ``r`` whose magnitudes ``r**(h-1)`` have the target centroid.

    The centroid grows monotonically with ``r``; targets outside the reachable
    range clamp to its ends.
    """
    if n_harm == 1 or target <= 1.0:
        return 0.0
    lo, hi = 0.0, _R_MAX
    if target >= _centroid(hi, n_harm):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _centroid(mid, n_harm) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _frames_db(power: np.ndarray, win: int, hop: int) -> np.ndarray:
    if power.size < win:
        return np.array([10.0 * np.log10(max(power.mean(), 1e-30))])
    csum = np.concatenate([[0.0], np.cumsum(power)])
    starts = np.arange(0, power.size - win + 1, hop)
    return 10.0 * np.log10(np.maximum((csum[starts + win] - csum[starts]) / win, 1e-30))


def _envelope(
    n: int, sample_rate: int, params: RenderParams, table: DenormTable
) -> np.ndarray:
    """Linear amplitude envelope with the requested frame-dB mean and spread."""
    t = np.arange(n) / sample_rate
    duration = n / sample_rate
    win = int(round(WINDOW_S * sample_rate))
    hop = int(round(HOP_S * sample_rate))

    # Peak time in frame-centre terms, so the loudest analysis frame lands at
    # the requested fraction of the frame sequence.
    span = max(duration - win / sample_rate, 0.0)
    t_peak = min(0.5 * win / sample_rate + params.peak_position * span, duration)
    tent = np.where(
        t < t_peak,
        (t_peak - t) / max(t_peak, 1e-9),
        (t - t_peak) / max(duration - t_peak, 1e-9),
    )
    tent = np.clip(tent, 0.0, 1.0)

    # The rise never outlasts the peak, so the loudest frame stays put.
    rise = max(min(table.attack_time(params.attack), t_peak), 1.0 / sample_rate)
    shaping = np.minimum(1.0, (t + 1.0 / sample_rate) / rise)
    nf = min(int(round(FADE_S * sample_rate)), n // 2)
    if nf > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(nf) + 0.5) / nf)
        shaping[:nf] *= ramp
        shaping[n - nf :] *= ramp[::-1]
    shaping_power = shaping**2

    def frame_stats(depth):
        power = shaping_power * 10.0 ** (-depth * tent / 10.0)
        db = _frames_db(power, win, hop)
        return db.mean(), db.std()

    target_std = table.fluctuation(params.fluctuation)
    lo, hi = MIN_DEPTH_DB, 120.0
    if frame_stats(lo)[1] >= target_std:
        depth = lo
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if frame_stats(mid)[1] < target_std:
                lo = mid
            else:
                hi = mid
        depth = 0.5 * (lo + hi)
    mean_db = frame_stats(depth)[0]
    level_db = table.volume(params.volume) - mean_db
    return shaping * 10.0 ** ((level_db - depth * tent) / 20.0)


def synth_note(
    pitch: int,
    duration: float,
    params: RenderParams,
    table: DenormTable = DenormTable(),
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Synthesize one note of ``round(duration * sample_rate)`` samples."""
    if not 0 <= pitch <= 127:
        raise SynthError(f"pitch {pitch} outside 0..127")
    if duration < MIN_DURATION - 1e-9:
        raise SynthError(f"duration {duration:.4f}s below the {MIN_DURATION}s minimum")
    n = int(round(duration * sample_rate))
    f0 = 440.0 * 2.0 ** ((pitch - 69) / 12.0)
    n_harm = harmonic_count(f0, sample_rate)

    r = decay_for_centroid(table.centroid(params.brightness), n_harm)
    amps = r ** np.arange(n_harm, dtype=np.float64)
    amps *= math.sqrt(2.0 / np.sum(amps**2))  # unit-RMS carrier

    t = np.arange(n) / sample_rate
    rate = table.vibrato(params.vibrato)
    if rate > 0:
        cents = table.vibrato_depth_cents * np.sin(2.0 * np.pi * rate * t)
        inst = f0 * 2.0 ** (cents / 1200.0)
    else:
        inst = np.full(n, f0)
    phase = 2.0 * np.pi * np.cumsum(inst) / sample_rate
    phase -= phase[0]

    carrier = kernels.additive(phase, amps)
    noise_rng = np.random.default_rng([pitch, n])
    carrier += NOISE_REL * noise_rng.standard_normal(n)
    return _envelope(n, sample_rate, params, table) * carrier


def render_audio(
    score: Score,
    params: Sequence[RenderParams],
    table: DenormTable = DenormTable(),
    sample_rate: int = SAMPLE_RATE,
) -> AudioBuffer:
    """Place every note at its onset sample and mix into one buffer.

    Notes shorter than the 50 ms minimum are lengthened to it. The mix is
    rescaled to a 0.9 peak only if it would otherwise clip.
    """
    if len(score.notes) == 0:
        raise SynthError("empty score")
    if len(params) != len(score.notes):
        raise SynthError(f"{len(params)} parameter sets for {len(score.notes)} notes")
    min_len = int(round(MIN_DURATION * sample_rate))
    spans = []
    for note in score.notes:
        start = int(round(note.onset * sample_rate))
        if start < 0:
            raise SynthError("note onsets must be non-negative")
        length = int(round(note.offset * sample_rate)) - start
        if length < min_len:
            logger.warning(
                "note at %.3fs lengthened from %.4fs to %.2fs",
                note.onset, length / sample_rate, MIN_DURATION,
            )
            length = min_len
        spans.append((start, length))
    end = max(max(s + n for s, n in spans), int(round(score.notes[-1].offset * sample_rate)))
    out = np.zeros(end + int(round(TAIL_S * sample_rate)))
    for note, p, (start, length) in zip(score.notes, params, spans):
        out[start : start + length] += synth_note(
            note.pitch, length / sample_rate, p, table, sample_rate
        )
    peak = np.max(np.abs(out))
    if peak > 1.0:
        out *= NORMALIZE_PEAK / peak
    return AudioBuffer(out, sample_rate)
