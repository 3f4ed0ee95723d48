"""Timing rewrite of an input score under a sampled EMT timing profile.

Three steps, in order: rescale to a target tempo, stretch each inter-onset
gap by a normalized-IOI draw, then set each offset from a coverage draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio_features import piece_tempo
from .expression import ExpressionModel, sample_feature, sample_tempo
from .score_io import Score

__all__ = [
    "TimingPlan",
    "scale_tempo",
    "resample_iois",
    "apply_coverage",
    "modify_midi",
]


@dataclass(frozen=True)
class TimingPlan:
    """The draws behind one timing rewrite; replaying them reproduces it."""

    target_tempo: float
    ioi_factors: tuple[float, ...]
    coverage: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ioi_factors", tuple(float(v) for v in self.ioi_factors))
        object.__setattr__(self, "coverage", tuple(float(v) for v in self.coverage))
        if not self.target_tempo > 0:
            raise ValueError("target tempo must be positive")
        if any(v <= 0 for v in self.ioi_factors):
            raise ValueError("IOI factors must be positive")
        if any(not 0 < v <= 1.2 for v in self.coverage):
            raise ValueError("coverage values must lie in (0, 1.2]")

    def to_dict(self) -> dict:
        return {
            "target_tempo": self.target_tempo,
            "ioi_factors": list(self.ioi_factors),
            "coverage": list(self.coverage),
        }


def _check_monotone(onsets: np.ndarray) -> None:
    if np.any(np.diff(onsets) <= 0):
        raise AssertionError("onset monotonicity violated")


def scale_tempo(score: Score, target: float) -> Score:
    """Scale all times by ``target / T`` so the result has tempo ``target``.

    ``T`` is the score's own seconds-per-beat tempo.
    """
    if not target > 0:
        raise ValueError("target tempo must be positive")
    c = target / piece_tempo(score)
    return score.with_timing(
        [c * n.onset for n in score.notes], [c * n.offset for n in score.notes]
    )


def resample_iois(score: Score, factors: Sequence[float]) -> Score:
    """Multiply each inter-onset gap by its factor, anchored at the first onset.

    Durations are carried unchanged as provisional offsets.
    """
    notes = score.notes
    if len(factors) != len(notes) - 1:
        raise ValueError(f"expected {len(notes) - 1} IOI factors, got {len(factors)}")
    factors = np.asarray(factors, dtype=np.float64)
    if np.any(factors <= 0):
        raise ValueError("IOI factors must be positive")
    old = np.array([n.onset for n in notes])
    new = np.empty_like(old)
    new[0] = old[0]
    for k in range(1, len(old)):
        new[k] = new[k - 1] + factors[k - 1] * (old[k] - old[k - 1])
    _check_monotone(new)
    durations = np.array([n.offset - n.onset for n in notes])
    return score.with_timing(new, new + durations)


def apply_coverage(score: Score, coverage: Sequence[float]) -> Score:
    """Set each offset to cover the given fraction of its inter-onset interval.

    The last note has no successor and scales its own duration instead.
    """
    notes = score.notes
    if len(coverage) != len(notes):
        raise ValueError(f"expected {len(notes)} coverage values, got {len(coverage)}")
    kappa = np.asarray(coverage, dtype=np.float64)
    if np.any(kappa <= 0):
        raise ValueError("coverage values must be positive")
    onsets = np.array([n.onset for n in notes])
    offsets = np.empty_like(onsets)
    offsets[:-1] = onsets[:-1] + kappa[:-1] * np.diff(onsets)
    offsets[-1] = onsets[-1] + kappa[-1] * (notes[-1].offset - onsets[-1])
    return score.with_timing(onsets, offsets)


def apply_plan(score: Score, plan: TimingPlan) -> Score:
    out = scale_tempo(score, plan.target_tempo)
    out = resample_iois(out, plan.ioi_factors)
    return apply_coverage(out, plan.coverage)


def modify_midi(
    score: Score, model: ExpressionModel, emt: str, rng: np.random.Generator
) -> tuple[Score, TimingPlan]:
    """Draw a timing plan for ``emt`` and apply it to ``score``.

    Draw order is fixed (tempo, K-1 IOI factors, K coverages) so a seed fully
    determines the result.
    """
    model.check_emt(emt)
    k = len(score.notes)
    tau = sample_tempo(model, emt, rng)
    iota = sample_feature(model, emt, "normalized_ioi", rng, size=k - 1)
    kappa = sample_feature(model, emt, "coverage", rng, size=k)
    plan = TimingPlan(tau, tuple(iota), tuple(kappa))
    return apply_plan(score, plan), plan
