"""Note-level audio features and score timing features.

Timing features (tempo, normalized IOI, note coverage) are computed from the
score alone. Audio features (volume, fluctuation, peak position, vibrato
rate, brightness) are measured on the note's segment of an aligned recording.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .score_io import NoteEvent, Score
from .wavio import AudioBuffer

logger = logging.getLogger(__name__)

__all__ = [
    "NoteAudioFeatures",
    "NoteTimingFeatures",
    "PieceFeatures",
    "FEATURE_NAMES",
    "piece_tempo",
    "note_timing_features",
    "f0_track",
    "extract_note_audio_features",
    "extract_piece_features",
]

WINDOW_S = 0.046
HOP_S = 0.010
F0_MIN = 180.0
F0_MAX = 2000.0
CLARITY_THRESHOLD = 0.5
DB_FLOOR = -80.0
COVERAGE_CAP = 1.2
VIBRATO_BAND = (3.0, 9.0)
VIBRATO_MIN_CENTS = 10.0
MAX_HARMONICS = 12

TIMING_FEATURES = ("normalized_ioi", "coverage")
AUDIO_FEATURES = ("volume", "fluctuation", "peak_position", "vibrato", "brightness")
FEATURE_NAMES = TIMING_FEATURES + AUDIO_FEATURES


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class NoteTimingFeatures:
    normalized_ioi: float
    coverage: float


@dataclass(frozen=True)
class NoteAudioFeatures:
    volume: float
    fluctuation: float
    peak_position: float
    vibrato: float
    brightness: float


@dataclass(frozen=True)
class PieceFeatures:
    """Features of one recording.

    ``normalized`` tells whether the audio features hold raw physical values
    (dB, Hz, harmonic index) or per-recording Min-max values in [0, 1].
    """

    tempo: float
    ioi_per_beat: float
    timing: tuple[NoteTimingFeatures, ...]
    audio: tuple[NoteAudioFeatures, ...]
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "timing", tuple(self.timing))
        object.__setattr__(self, "audio", tuple(self.audio))
        if len(self.timing) != len(self.audio):
            raise FeatureError("timing and audio feature lists differ in length")
        if not (self.tempo > 0 and self.ioi_per_beat > 0):
            raise FeatureError("tempo and ioi_per_beat must be positive")

    def __len__(self) -> int:
        return len(self.timing)

    def column(self, name: str) -> np.ndarray:
        source = self.timing if name in TIMING_FEATURES else self.audio
        return np.array([getattr(f, name) for f in source], dtype=np.float64)

    def matrix(self) -> np.ndarray:
        """``(n_notes, 7)`` array in :data:`FEATURE_NAMES` order."""
        return np.column_stack([self.column(name) for name in FEATURE_NAMES])

    def to_dict(self) -> dict:
        return {
            "schema": "gaussian_ems.features",
            "version": 1,
            "tempo": self.tempo,
            "ioi_per_beat": self.ioi_per_beat,
            "normalized": self.normalized,
            "notes": [{**asdict(t), **asdict(a)} for t, a in zip(self.timing, self.audio)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PieceFeatures":
        if doc.get("schema") != "gaussian_ems.features" or doc.get("version") != 1:
            raise FeatureError("not a version-1 feature document")
        try:
            timing = [NoteTimingFeatures(**{k: float(n[k]) for k in TIMING_FEATURES}) for n in doc["notes"]]
            audio = [NoteAudioFeatures(**{k: float(n[k]) for k in AUDIO_FEATURES}) for n in doc["notes"]]
            return cls(
                tempo=float(doc["tempo"]),
                ioi_per_beat=float(doc["ioi_per_beat"]),
                timing=timing,
                audio=audio,
                normalized=bool(doc.get("normalized", False)),
            )
        except KeyError as exc:
            raise FeatureError(f"feature document missing field {exc}") from exc


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


def piece_tempo(score: Score) -> float:
    """Seconds per beat: total sounding span over total notated beats."""
    if len(score.notes) < 2:
        raise FeatureError("tempo needs at least two notes")
    total_beats = sum(n.note_value for n in score.notes)
    return (score.notes[-1].offset - score.notes[0].onset) / total_beats


def _iois(notes: Sequence[NoteEvent]) -> np.ndarray:
    onsets = np.array([n.onset for n in notes])
    iois = np.empty(len(notes))
    iois[:-1] = np.diff(onsets)
    # Last note has no successor; its own duration stands in for the IOI.
    iois[-1] = notes[-1].offset - notes[-1].onset
    if np.any(iois <= 0):
        raise FeatureError("onsets must strictly increase")
    return iois


def ioi_per_beat(score: Score) -> float:
    """Mean IOI per beat over all notes (the normalizing base of the IOI)."""
    values = np.array([n.note_value for n in score.notes])
    return float(np.mean(_iois(score.notes) / values))


def note_timing_features(score: Score) -> list[NoteTimingFeatures]:
    """Normalized IOI and note coverage for every note."""
    if len(score.notes) < 2:
        raise FeatureError("timing features need at least two notes")
    iois = _iois(score.notes)
    values = np.array([n.note_value for n in score.notes])
    alpha = float(np.mean(iois / values))
    durations = np.array([n.offset - n.onset for n in score.notes])
    norm_ioi = iois / (values * alpha)
    coverage = np.minimum(durations / iois, COVERAGE_CAP)
    return [NoteTimingFeatures(float(i), float(c)) for i, c in zip(norm_ioi, coverage)]


# ---------------------------------------------------------------------------
# Audio
# ---------------------------------------------------------------------------


def _frame_params(sample_rate: int, window_s: float, hop_s: float) -> tuple[int, int]:
    return int(round(window_s * sample_rate)), int(round(hop_s * sample_rate))


def _frame_starts(n: int, win: int, hop: int) -> np.ndarray:
    if n < win:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n - win + 1, hop, dtype=np.int64)


def _pick_period(row: np.ndarray, min_lag: int, max_lag: int) -> tuple[float, float]:
    """Return (lag, clarity) of the pitch peak in one NSDF row, or (0, 0)."""
    negative = np.nonzero(row[1:] < 0)[0]
    if negative.size == 0:
        return 0.0, 0.0
    first = max(int(negative[0]) + 1, min_lag)
    seg = row[first - 1 : max_lag + 2]
    mid = seg[1:-1]
    is_peak = (mid >= seg[:-2]) & (mid > seg[2:]) & (mid > 0)
    peaks = np.nonzero(is_peak)[0] + first
    if peaks.size == 0:
        return 0.0, 0.0
    best = row[peaks].max()
    t = int(peaks[np.argmax(row[peaks] >= 0.9 * best)])
    a, b, c = row[t - 1], row[t], row[t + 1]
    denom = a - 2.0 * b + c
    delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return t + delta, b - 0.25 * (a - c) * delta


def _f0_frames(x: np.ndarray, starts: np.ndarray, win: int, sample_rate: int) -> np.ndarray:
    min_lag = max(int(np.floor(sample_rate / F0_MAX)), 2)
    max_lag = int(np.ceil(sample_rate / F0_MIN))
    # Lags from 1 so the zero-lag lobe can be skipped.
    nsdf = kernels.nsdf_frames(x, starts, win, 1, max_lag + 1)
    f0 = np.zeros(len(starts))
    for i, row in enumerate(nsdf):
        lag, clarity = _pick_period(row, min_lag, max_lag)
        if lag > 0 and clarity >= CLARITY_THRESHOLD:
            freq = sample_rate / lag
            if F0_MIN <= freq <= F0_MAX:
                f0[i] = freq
    return f0


def f0_track(audio: AudioBuffer, window_s: float = WINDOW_S, hop_s: float = HOP_S) -> np.ndarray:
    """Frame-wise fundamental frequency in Hz, 0 for unvoiced frames.

    Uses the normalized square difference function (an energy-normalized
    autocorrelation) with parabolic peak refinement; frames whose peak
    clarity is below 0.5 are unvoiced.
    """
    win, hop = _frame_params(audio.sample_rate, window_s, hop_s)
    x = audio.samples
    if x.size < win:
        raise FeatureError("audio shorter than one analysis window")
    starts = _frame_starts(x.size, win, hop)
    return _f0_frames(x, starts, win, audio.sample_rate)


def frame_db(x: np.ndarray, starts: np.ndarray, win: int) -> np.ndarray:
    """Per-frame RMS level in dB, floored at -80."""
    csum = np.concatenate([[0.0], np.cumsum(np.asarray(x, dtype=np.float64) ** 2)])
    ms = (csum[starts + win] - csum[starts]) / win
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.maximum(ms, 0.0))
    return np.maximum(db, DB_FLOOR)


def vibrato_rate(f0: np.ndarray, frame_rate: float) -> float:
    """Dominant 3-9 Hz rate of the detrended pitch deviation, or 0."""
    voiced = np.nonzero(f0 > 0)[0]
    if voiced.size < 4:
        return 0.0
    idx = np.arange(voiced[0], voiced[-1] + 1)
    cents = 1200.0 * np.log2(np.interp(idx, voiced, f0[voiced]) / np.median(f0[voiced]))
    trend = np.polyval(np.polyfit(idx, cents, 1), idx)
    dev = cents - trend
    if np.sqrt(2.0) * np.std(dev) < VIBRATO_MIN_CENTS:
        return 0.0
    nfft = max(8192, 1 << int(np.ceil(np.log2(8 * dev.size))))
    mag = np.abs(np.fft.rfft(dev * np.hanning(dev.size), nfft))
    freqs = np.fft.rfftfreq(nfft, 1.0 / frame_rate)
    band = np.nonzero((freqs >= VIBRATO_BAND[0]) & (freqs <= VIBRATO_BAND[1]))[0]
    k = int(band[np.argmax(mag[band])])
    if 0 < k < mag.size - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2.0 * b + c
        if denom != 0:
            return float(freqs[k] + 0.5 * (a - c) / denom * (freqs[1] - freqs[0]))
    return float(freqs[k])


def harmonic_centroid(
    x: np.ndarray, starts: np.ndarray, win: int, f0: np.ndarray, sample_rate: int
) -> float:
    """Centroid (in harmonic index) of the mean harmonic magnitude profile.

    Each frame's spectrum is sampled at multiples of that frame's f0 (peak
    within a narrow band around ``h * f0``) and the magnitudes are averaged
    over frames before taking the centroid.
    """
    f0_ref = float(np.median(f0))
    n_harm = int(min(MAX_HARMONICS, np.floor(0.5 * sample_rate / f0_ref)))
    if n_harm < 1:
        return 1.0
    nfft = 4096
    window = np.hanning(win)
    frames = np.stack([x[s : s + win] for s in starts]) * window
    spec = np.abs(np.fft.rfft(frames, nfft, axis=1))
    bin_hz = sample_rate / nfft
    profile = np.zeros(n_harm)
    for i, f in enumerate(f0):
        for h in range(1, n_harm + 1):
            centre = h * f / bin_hz
            half = max(2.0, 0.02 * centre)
            lo = max(int(np.floor(centre - half)), 0)
            hi = min(int(np.ceil(centre + half)) + 1, spec.shape[1])
            if lo < hi:
                profile[h - 1] += spec[i, lo:hi].max()
    total = profile.sum()
    if total <= 0:
        return 1.0
    return float(np.dot(np.arange(1, n_harm + 1), profile) / total)


def extract_note_audio_features(
    audio: AudioBuffer,
    note: NoteEvent,
    window_s: float = WINDOW_S,
    hop_s: float = HOP_S,
) -> NoteAudioFeatures:
    """Measure volume, fluctuation, peak position, vibrato and brightness."""
    sr = audio.sample_rate
    start = int(round(note.onset * sr))
    stop = int(round(note.offset * sr))
    if start < 0 or stop > audio.samples.size + 1:
        raise FeatureError(f"note {note.onset:.3f}-{note.offset:.3f}s outside the audio")
    seg = audio.samples[start : min(stop, audio.samples.size)]
    win, hop = _frame_params(sr, window_s, hop_s)
    starts = _frame_starts(seg.size, win, hop)
    if starts.size < 2:
        raise FeatureError(f"note at {note.onset:.3f}s is shorter than two frames")

    db = frame_db(seg, starts, win)
    volume = float(np.mean(db))
    fluctuation = float(np.std(db))
    peak_position = float(np.argmax(db) / (starts.size - 1))

    f0 = _f0_frames(seg, starts, win, sr)
    voiced = f0 > 0
    if voiced.mean() < 0.2:
        if db.max() > DB_FLOOR:
            warnings.warn(
                f"f0 undetectable in {100 * (1 - voiced.mean()):.0f}% of frames "
                f"(note at {note.onset:.3f}s); vibrato set to 0",
                stacklevel=2,
            )
        vibrato = 0.0
    else:
        vibrato = vibrato_rate(f0, sr / hop)

    nominal = 440.0 * 2.0 ** ((note.pitch - 69) / 12.0)
    f0_filled = np.where(voiced, f0, np.median(f0[voiced]) if voiced.any() else nominal)
    brightness = harmonic_centroid(seg, starts, win, f0_filled, sr)
    return NoteAudioFeatures(volume, fluctuation, peak_position, vibrato, brightness)


def extract_piece_features(score: Score, audio: AudioBuffer) -> PieceFeatures:
    """Raw (unnormalized) features of an aligned score/recording pair."""
    timing = note_timing_features(score)
    notes = [extract_note_audio_features(audio, n) for n in score.notes]
    return PieceFeatures(
        tempo=piece_tempo(score),
        ioi_per_beat=ioi_per_beat(score),
        timing=timing,
        audio=notes,
    )
