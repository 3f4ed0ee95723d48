"""Per-EMT Gaussian expression models.

Features are Min-max normalized per recording, pooled per expressive term
(EMT) into independent Gaussians, and sampled back through a Gaussian
truncated to one standard deviation around its mean.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .audio_features import (
    AUDIO_FEATURES,
    FEATURE_NAMES,
    NoteAudioFeatures,
    PieceFeatures,
)

__all__ = [
    "DenormTable",
    "ExpressionModel",
    "ModelError",
    "RenderParams",
    "normalize_recording",
    "fit_expression_model",
    "sample_truncated",
    "render_params",
    "classify",
    "save_model",
    "load_model",
]

MODEL_SCHEMA = "gaussian_ems.expression_model"
MODEL_VERSION = 1
VOLUME_FLOOR_DB = -80.0
SIGMA_FLOOR = 1e-3
DEFAULT_ATTACK = 0.5
# Timing draws stay strictly positive; coverage is capped like the extractor.
TIMING_LIMITS = {"normalized_ioi": (0.05, math.inf), "coverage": (0.05, 1.2)}
MIN_TEMPO = 1e-3


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class DenormTable:
    """Physical ranges that the synthesizer maps [0, 1] parameters onto."""

    volume_db: tuple[float, float] = (-60.0, -6.0)
    fluctuation_db: tuple[float, float] = (0.0, 6.0)
    vibrato_hz: tuple[float, float] = (4.0, 8.0)
    vibrato_off_below: float = 0.05
    brightness: tuple[float, float] = (1.0, 4.0)
    attack_s: tuple[float, float] = (0.01, 0.15)
    vibrato_depth_cents: float = 20.0

    def __post_init__(self):
        for name in ("volume_db", "fluctuation_db", "vibrato_hz", "brightness", "attack_s"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not lo < hi:
                raise ModelError(f"denorm range {name} must satisfy min < max")

    def volume(self, v: float) -> float:
        lo, hi = self.volume_db
        return lo + v * (hi - lo)

    def fluctuation(self, v: float) -> float:
        lo, hi = self.fluctuation_db
        return lo + v * (hi - lo)

    def vibrato(self, v: float) -> float:
        if v < self.vibrato_off_below:
            return 0.0
        lo, hi = self.vibrato_hz
        return lo + v * (hi - lo)

    def centroid(self, v: float) -> float:
        lo, hi = self.brightness
        return lo + v * (hi - lo)

    def attack_time(self, v: float) -> float:
        """Rise time in seconds; a larger attack parameter rises faster."""
        lo, hi = self.attack_s
        return hi - v * (hi - lo)

    def to_dict(self) -> dict:
        return {
            "volume_db": list(self.volume_db),
            "fluctuation_db": list(self.fluctuation_db),
            "vibrato_hz": list(self.vibrato_hz),
            "vibrato_off_below": self.vibrato_off_below,
            "brightness": list(self.brightness),
            "attack_s": list(self.attack_s),
            "vibrato_depth_cents": self.vibrato_depth_cents,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DenormTable":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class RenderParams:
    """Per-note synthesis controls, each in [0, 1]."""

    volume: float
    fluctuation: float
    peak_position: float
    vibrato: float
    brightness: float
    attack: float = DEFAULT_ATTACK

    def __post_init__(self):
        for name in ("volume", "fluctuation", "peak_position", "vibrato", "brightness", "attack"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ModelError(f"render parameter {name}={value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "fluctuation": self.fluctuation,
            "peak_position": self.peak_position,
            "vibrato": self.vibrato,
            "brightness": self.brightness,
            "attack": self.attack,
        }


@dataclass(frozen=True)
class ExpressionModel:
    """Independent Gaussians per EMT: tempo (s/beat) plus seven note features.

    ``features[emt][name]`` is a ``(mean, std)`` pair.
    """

    emts: tuple[str, ...]
    tempo: Mapping[str, tuple[float, float]]
    features: Mapping[str, Mapping[str, tuple[float, float]]]
    denorm: DenormTable = field(default_factory=DenormTable)

    def __post_init__(self):
        object.__setattr__(self, "emts", tuple(self.emts))
        for emt in self.emts:
            if emt not in self.tempo or emt not in self.features:
                raise ModelError(f"EMT {emt!r} lacks parameters")
            missing = set(FEATURE_NAMES) - set(self.features[emt])
            if missing:
                raise ModelError(f"EMT {emt!r} missing feature entries {sorted(missing)}")
            pairs = [self.tempo[emt], *self.features[emt].values()]
            if any(not (s >= 0) for _, s in pairs):
                raise ModelError(f"EMT {emt!r} has a negative or NaN std")
            for name in AUDIO_FEATURES:
                mu = self.features[emt][name][0]
                if not 0.0 <= mu <= 1.0:
                    raise ModelError(f"EMT {emt!r}: mean of {name} must lie in [0, 1]")

    def check_emt(self, emt: str) -> None:
        if emt not in self.emts:
            raise ModelError(f"unknown EMT {emt!r}; available: {', '.join(self.emts)}")

    def __eq__(self, other):
        if not isinstance(other, ExpressionModel):
            return NotImplemented
        return model_to_dict(self) == model_to_dict(other)


# ---------------------------------------------------------------------------
# Normalization and fitting
# ---------------------------------------------------------------------------


def _minmax(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def normalize_recording(piece: PieceFeatures) -> PieceFeatures:
    """Min-max normalize one recording's audio features into [0, 1].

    Volume uses the pair (-80 dB, loudest note); fluctuation, vibrato and
    brightness use the recording's own min and max. Peak position and the
    timing features pass through. A feature that is constant across the
    recording maps to 0.5.
    """
    if len(piece) < 2:
        raise ModelError("normalization needs at least two notes")
    if piece.normalized:
        raise ModelError("recording is already normalized")
    cols = {name: piece.column(name) for name in AUDIO_FEATURES}
    vol = cols["volume"]
    out = {
        "volume": _minmax(vol, VOLUME_FLOOR_DB, float(vol.max())),
        "peak_position": cols["peak_position"],
    }
    for name in ("fluctuation", "vibrato", "brightness"):
        c = cols[name]
        out[name] = _minmax(c, float(c.min()), float(c.max()))
    audio = [
        NoteAudioFeatures(**{name: float(np.clip(out[name][k], 0.0, 1.0)) for name in AUDIO_FEATURES})
        for k in range(len(piece))
    ]
    return replace(piece, audio=tuple(audio), normalized=True)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1))


def fit_expression_model(
    corpus: Iterable[tuple[str, PieceFeatures]],
    denorm: Optional[DenormTable] = None,
) -> ExpressionModel:
    """Fit per-EMT Gaussians from ``(emt, normalized piece)`` pairs.

    Tempo is fitted over recording-level values; note-level features pool the
    notes of all recordings of an EMT. Standard deviations use the unbiased
    (n - 1) variance.
    """
    by_emt: dict[str, list[PieceFeatures]] = defaultdict(list)
    for emt, piece in corpus:
        if not piece.normalized:
            raise ModelError("fit expects normalized recordings")
        by_emt[emt].append(piece)
    if not by_emt:
        raise ModelError("empty corpus")

    tempo, features = {}, {}
    for emt in sorted(by_emt):
        pieces = by_emt[emt]
        if len(pieces) < 2:
            raise ModelError(f"EMT {emt!r} has {len(pieces)} recording(s); need at least 2")
        n_notes = sum(len(p) for p in pieces)
        if n_notes < 8:
            raise ModelError(f"EMT {emt!r} has {n_notes} notes; need at least 8")
        tempo[emt] = _mean_std([p.tempo for p in pieces])
        pooled = np.vstack([p.matrix() for p in pieces])
        features[emt] = {
            name: _mean_std(pooled[:, j]) for j, name in enumerate(FEATURE_NAMES)
        }
    return ExpressionModel(
        emts=tuple(sorted(by_emt)),
        tempo=tempo,
        features=features,
        denorm=denorm or DenormTable(),
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_truncated(mean, std, rng: np.random.Generator, size=None, unit=False):
    """Draw from N(mean, std) conditioned on [mean - std, mean + std].

    Rejection sampling; ``std == 0`` returns ``mean``. With ``unit=True`` the
    draws are additionally clamped to [0, 1]. Returns a float when ``size``
    is None, else an array of that many draws.
    """
    if std < 0:
        raise ValueError("std must be non-negative")
    n = 1 if size is None else int(size)
    if std == 0:
        out = np.full(n, float(mean))
    else:
        out = np.empty(n)
        filled = 0
        while filled < n:
            need = n - filled
            # ~68% acceptance; oversample to finish in one pass most of the time.
            z = rng.standard_normal(int(need * 1.5) + 8)
            z = z[np.abs(z) <= 1.0][:need]
            out[filled : filled + z.size] = mean + std * z
            filled += z.size
    if unit:
        np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if size is None else out


def sample_feature(model: ExpressionModel, emt: str, name: str, rng, size=None):
    """Truncated draw(s) of one feature, kept inside its valid range."""
    mu, sigma = model.features[emt][name]
    if name in TIMING_LIMITS:
        lo, hi = TIMING_LIMITS[name]
        return np.clip(sample_truncated(mu, sigma, rng, size=size), lo, hi)
    return sample_truncated(mu, sigma, rng, size=size, unit=True)


def sample_tempo(model: ExpressionModel, emt: str, rng) -> float:
    mu, sigma = model.tempo[emt]
    return max(sample_truncated(mu, sigma, rng), MIN_TEMPO)


def render_params(
    model: ExpressionModel, emt: str, note_count: int, rng: np.random.Generator
) -> list[RenderParams]:
    """Sample ``note_count`` independent parameter sets for ``emt``.

    Attack is not modelled and is set to 0.5; score markings may override it.
    """
    model.check_emt(emt)
    if note_count < 1:
        raise ModelError("note_count must be at least 1")
    draws = {name: sample_feature(model, emt, name, rng, size=note_count) for name in AUDIO_FEATURES}
    return [
        RenderParams(**{name: float(draws[name][k]) for name in AUDIO_FEATURES})
        for k in range(note_count)
    ]


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def _log_normal(x, mu, sigma):
    sigma = max(sigma, SIGMA_FLOOR)
    z = (np.asarray(x) - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)


def classify(piece: PieceFeatures, model: ExpressionModel) -> list[tuple[str, float]]:
    """Rank EMTs by the log-likelihood of a normalized recording.

    The score sums per-note Gaussian log densities of the seven note features
    plus the tempo log density. Ties keep lexical EMT order.
    """
    if not piece.normalized:
        raise ModelError("classify expects a normalized recording")
    mat = piece.matrix()
    scores = []
    for emt in sorted(model.emts):
        mu_t, sd_t = model.tempo[emt]
        total = float(_log_normal(piece.tempo, mu_t, sd_t))
        for j, name in enumerate(FEATURE_NAMES):
            mu, sd = model.features[emt][name]
            total += float(np.sum(_log_normal(mat[:, j], mu, sd)))
        scores.append((emt, total))
    # sorted() is stable, so equal scores stay in lexical order.
    return sorted(scores, key=lambda item: -item[1])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def model_to_dict(model: ExpressionModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "emts": {
            emt: {
                "tempo": list(model.tempo[emt]),
                "features": {name: list(model.features[emt][name]) for name in FEATURE_NAMES},
            }
            for emt in model.emts
        },
        "denorm": model.denorm.to_dict(),
    }


def model_from_dict(doc: Mapping) -> ExpressionModel:
    if not isinstance(doc, Mapping) or doc.get("schema") != MODEL_SCHEMA:
        raise ModelError("not an expression model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')!r}")
    try:
        entries = doc["emts"]
        tempo = {emt: _pair(e["tempo"]) for emt, e in entries.items()}
        features = {}
        for emt, e in entries.items():
            missing = set(FEATURE_NAMES) - set(e["features"])
            if missing:
                raise ModelError(f"EMT {emt!r} missing feature entries {sorted(missing)}")
            features[emt] = {name: _pair(e["features"][name]) for name in FEATURE_NAMES}
        denorm = DenormTable.from_dict(doc["denorm"]) if "denorm" in doc else DenormTable()
    except (KeyError, TypeError) as exc:
        raise ModelError(f"corrupt model document: {exc!r}") from exc
    return ExpressionModel(emts=tuple(entries), tempo=tempo, features=features, denorm=denorm)


def _pair(value) -> tuple[float, float]:
    mu, sigma = value
    return float(mu), float(sigma)


def save_model(model: ExpressionModel) -> bytes:
    return json.dumps(model_to_dict(model), indent=2).encode("utf-8")


def load_model(data: bytes) -> ExpressionModel:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"corrupt model document: {exc}") from exc
    return model_from_dict(doc)
