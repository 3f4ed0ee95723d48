"""Dynamics and articulation markings mapped onto render parameters."""

from __future__ import annotations

from dataclasses import replace
from types import MappingProxyType
from typing import Optional, Sequence

from .expression import RenderParams
from .score_io import Articulation, Dynamic, Score

# Volume parameter per dynamic marking.
DYNAMIC_TABLE = MappingProxyType(
    {
        Dynamic.PPP: 0.164,
        Dynamic.PP: 0.313,
        Dynamic.P: 0.484,
        Dynamic.MP: 0.564,
        Dynamic.MF: 0.664,
        Dynamic.F: 0.773,
        Dynamic.FF: 0.890,
        Dynamic.FFF: 1.00,
    }
)

# Attack parameter per articulation symbol.
ARTICULATION_TABLE = MappingProxyType(
    {
        Articulation.STACCATO: 0.545,
        Articulation.ACCENT: 0.600,
        Articulation.MARCATO: 0.655,
        Articulation.TENUTO: 0.545,
        Articulation.LEGATO: 0.227,
    }
)

REFERENCE_DYNAMIC = Dynamic.MF


def dynamic_to_volume(marking) -> float:
    return DYNAMIC_TABLE[Dynamic(marking)]


def articulation_to_attack(symbol) -> float:
    return ARTICULATION_TABLE[Articulation(symbol)]


def scale_volume(rendered: float, marking) -> float:
    """Scale a sampled volume relative to mf and clamp to [0, 1]."""
    ratio = dynamic_to_volume(marking) / DYNAMIC_TABLE[REFERENCE_DYNAMIC]
    return min(max(rendered * ratio, 0.0), 1.0)


def apply_score_markings(score: Score, params: Sequence[RenderParams]) -> list[RenderParams]:
    """Apply the score's dynamics and articulations to sampled parameters.

    A dynamic stays in force until the next one. Notes with no marking in
    force keep their parameters unchanged.
    """
    if len(params) != len(score.notes):
        raise ValueError(
            f"{len(params)} parameter sets for {len(score.notes)} notes"
        )
    out = []
    current: Optional[Dynamic] = None
    for note, p in zip(score.notes, params):
        if note.dynamic is not None:
            current = note.dynamic
        changes = {}
        if current is not None:
            changes["volume"] = scale_volume(p.volume, current)
        if note.articulation is not None:
            changes["attack"] = articulation_to_attack(note.articulation)
        out.append(replace(p, **changes) if changes else p)
    return out


def format_tables() -> str:
    """Both mapping tables as plain text, one ``name value`` pair per line."""
    lines = ["# dynamic -> volume"]
    lines += [f"{d.value} {_printed(v)}" for d, v in DYNAMIC_TABLE.items()]
    lines.append("# articulation -> attack")
    lines += [f"{a.value} {_printed(v)}" for a, v in ARTICULATION_TABLE.items()]
    return "\n".join(lines)


def _printed(value: float) -> str:
    return "1.00" if value == 1.0 else f"{value:.3f}"
