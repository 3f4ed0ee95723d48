"""Fixture builders shared across the test suite."""

import struct

import numpy as np

from gaussian_ems.expression import (
    DenormTable,
    ExpressionModel,
    fit_expression_model,
    normalize_recording,
    render_params,
)
from gaussian_ems.audio_features import FEATURE_NAMES, extract_piece_features
from gaussian_ems.score_io import NoteEvent, Score
from gaussian_ems.synth import render_audio
from gaussian_ems.timing import modify_midi

SR = 16000

# criterion number -> one-line PASS/FAIL report, printed in the terminal summary
ACCEPTANCE = {}


def report(number, title, ok, detail=""):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
    return ok


def metronomic_score(pitches, values, seconds_per_beat=0.5, coverage=1.0, start=0.0):
    """Evenly timed score: each note occupies ``value * seconds_per_beat``."""
    notes = []
    t = start
    for p, v in zip(pitches, values):
        ioi = v * seconds_per_beat
        notes.append(NoteEvent(pitch=p, onset=t, offset=t + coverage * ioi, note_value=v))
        t += ioi
    return Score(notes=tuple(notes))


def random_score(rng, n_notes=None, min_gap=0.05):
    """Random monophonic score with arbitrary rubato and articulation."""
    n = int(n_notes or rng.integers(2, 12))
    onsets = np.cumsum(rng.uniform(min_gap, 1.0, n)) + rng.uniform(0.0, 0.5)
    notes = []
    for k in range(n):
        gap = onsets[k + 1] - onsets[k] if k + 1 < n else rng.uniform(0.1, 1.0)
        dur = gap * rng.uniform(0.2, 1.0)
        notes.append(
            NoteEvent(
                pitch=int(rng.integers(40, 100)),
                onset=float(onsets[k]),
                offset=float(onsets[k] + dur),
                note_value=float(rng.choice([0.25, 0.5, 0.75, 1.0, 1.5, 2.0])),
            )
        )
    return Score(notes=tuple(notes))


def sine(freq, seconds=1.0, rms=0.1, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    return rms * np.sqrt(2.0) * np.sin(2.0 * np.pi * freq * t)


def vibrato_tone(freq, rate, depth_cents, seconds=1.0, amp=0.5, harmonics=(1.0,), sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    cents = depth_cents * np.sin(2.0 * np.pi * rate * t)
    phase = 2.0 * np.pi * np.cumsum(freq * 2.0 ** (cents / 1200.0)) / sr
    return amp * sum(a * np.sin((h + 1) * phase) for h, a in enumerate(harmonics))


# ---------------------------------------------------------------------------
# Minimal SMF builder independent of write_midi
# ---------------------------------------------------------------------------


def varlen(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def smf(tracks, tpq=480, fmt=None):
    """Assemble an SMF from tracks given as lists of ``(delta, bytes)``."""
    fmt = (0 if len(tracks) == 1 else 1) if fmt is None else fmt
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), tpq)
    for events in tracks:
        body = b"".join(varlen(d) + msg for d, msg in events) + b"\x00\xff\x2f\x00"
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


def tempo_event(us_per_quarter):
    return b"\xff\x51\x03" + us_per_quarter.to_bytes(3, "big")


# ---------------------------------------------------------------------------
# Synthetic EMT corpus
# ---------------------------------------------------------------------------

# Ground-truth generators for three well separated EMTs. Means differ by at
# least 4 sigma on tempo, coverage, peak position and volume.
TRUTH = {
    "agitato": dict(
        tempo=(0.40, 0.02),
        normalized_ioi=(1.0, 0.05),
        coverage=(0.55, 0.03),
        volume=(0.85, 0.03),
        fluctuation=(0.6, 0.05),
        peak_position=(0.2, 0.04),
        vibrato=(0.8, 0.05),
        brightness=(0.8, 0.05),
    ),
    "cantabile": dict(
        tempo=(0.60, 0.02),
        normalized_ioi=(1.0, 0.05),
        coverage=(0.95, 0.02),
        volume=(0.6, 0.03),
        fluctuation=(0.4, 0.05),
        peak_position=(0.5, 0.04),
        vibrato=(0.5, 0.05),
        brightness=(0.5, 0.05),
    ),
    "tranquillo": dict(
        tempo=(0.85, 0.03),
        normalized_ioi=(1.0, 0.05),
        coverage=(0.75, 0.03),
        volume=(0.35, 0.03),
        fluctuation=(0.3, 0.05),
        peak_position=(0.8, 0.04),
        vibrato=(0.3, 0.05),
        brightness=(0.2, 0.05),
    ),
}


def truth_model(table=None):
    return ExpressionModel(
        emts=tuple(sorted(TRUTH)),
        tempo={e: v["tempo"] for e, v in TRUTH.items()},
        features={e: {n: v[n] for n in FEATURE_NAMES} for e, v in TRUTH.items()},
        denorm=table or DenormTable(),
    )


def base_score(rng, n_notes=8):
    pitches = rng.integers(57, 77, n_notes)
    values = rng.choice([1.0, 1.5, 2.0], n_notes)
    return metronomic_score([int(p) for p in pitches], [float(v) for v in values])


def render_piece(model, emt, score, seed):
    """Full render path; returns (modified score, audio)."""
    rng = np.random.default_rng(seed)
    modified, _ = modify_midi(score, model, emt, rng)
    params = render_params(model, emt, len(modified.notes), rng)
    return modified, render_audio(modified, params, model.denorm)


def observe(model, emt, score, seed):
    """Render then re-extract normalized features of one piece."""
    modified, audio = render_piece(model, emt, score, seed)
    return normalize_recording(extract_piece_features(modified, audio))


def build_training_corpus(recordings_per_emt=6, seed=1234):
    truth = truth_model()
    rng = np.random.default_rng(seed)
    corpus = []
    for emt in truth.emts:
        for _ in range(recordings_per_emt):
            score = base_score(rng)
            corpus.append((emt, observe(truth, emt, score, int(rng.integers(2**31)))))
    return corpus


def fitted_model(recordings_per_emt=6, seed=1234):
    return fit_expression_model(build_training_corpus(recordings_per_emt, seed))
