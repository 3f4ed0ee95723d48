"""Symbolic score input/output.

Reads Standard MIDI Files (format 0/1) and a monophonic MusicXML
``score-partwise`` subset into an immutable :class:`Score`, writes
format-0 MIDI, and (de)serializes scores as JSON documents.
"""

from __future__ import annotations

import enum
import json
import logging
import struct
import xml.etree.ElementTree as ET
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "Articulation",
    "Dynamic",
    "NoteEvent",
    "Score",
    "ScoreError",
    "parse_midi",
    "parse_musicxml",
    "write_midi",
    "score_to_dict",
    "score_from_dict",
    "dump_score",
    "load_score",
]

DEFAULT_TEMPO_US = 500_000  # 120 BPM
WRITE_TPQ = 960


class ScoreError(ValueError):
    """Raised for malformed or unsupported score input."""


class Articulation(str, enum.Enum):
    STACCATO = "staccato"
    ACCENT = "accent"
    MARCATO = "marcato"
    TENUTO = "tenuto"
    LEGATO = "legato"


class Dynamic(str, enum.Enum):
    PPP = "ppp"
    PP = "pp"
    P = "p"
    MP = "mp"
    MF = "mf"
    F = "f"
    FF = "ff"
    FFF = "fff"


@dataclass(frozen=True)
class NoteEvent:
    """One sounding note of a monophonic line.

    Times are absolute seconds; ``note_value`` is the notated length in beats
    (quarter notes).
    """

    pitch: int
    onset: float
    offset: float
    note_value: float
    articulation: Optional[Articulation] = None
    dynamic: Optional[Dynamic] = None

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ScoreError(f"pitch {self.pitch} outside 0..127")
        if not self.offset > self.onset:
            raise ScoreError(
                f"note at {self.onset:.6f}s: offset {self.offset:.6f}s must exceed onset"
            )
        if not self.note_value > 0:
            raise ScoreError(f"note at {self.onset:.6f}s: note_value must be > 0")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class Score:
    notes: tuple[NoteEvent, ...]
    ticks_per_quarter: int = WRITE_TPQ
    source_kind: str = "midi"

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        if not self.notes:
            raise ScoreError("no notes")
        if self.source_kind not in ("midi", "musicxml"):
            raise ScoreError(f"unknown source_kind {self.source_kind!r}")
        for prev, cur in zip(self.notes, self.notes[1:]):
            if not cur.onset > prev.onset:
                raise ScoreError(
                    f"onsets must strictly increase (note at {cur.onset:.6f}s "
                    f"follows {prev.onset:.6f}s)"
                )
        if self.source_kind == "midi" and any(
            n.articulation is not None or n.dynamic is not None for n in self.notes
        ):
            raise ScoreError("MIDI scores cannot carry articulation or dynamic marks")

    def __len__(self) -> int:
        return len(self.notes)

    @property
    def onsets(self) -> list[float]:
        return [n.onset for n in self.notes]

    @property
    def offsets(self) -> list[float]:
        return [n.offset for n in self.notes]

    def with_timing(self, onsets: Sequence[float], offsets: Sequence[float]) -> "Score":
        """Return a copy with every note's onset/offset replaced."""
        if len(onsets) != len(self.notes) or len(offsets) != len(self.notes):
            raise ScoreError("timing arrays must have one entry per note")
        notes = [
            replace(n, onset=float(o), offset=float(f))
            for n, o, f in zip(self.notes, onsets, offsets)
        ]
        return replace(self, notes=tuple(notes))


# ---------------------------------------------------------------------------
# Standard MIDI File
# ---------------------------------------------------------------------------


def _read_varlen(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise ScoreError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise ScoreError("variable-length quantity longer than 4 bytes")


def _write_varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _iter_chunks(data: bytes):
    pos = 0
    while pos + 8 <= len(data):
        kind = data[pos : pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise ScoreError(f"truncated {kind!r} chunk")
        yield kind, body
        pos += 8 + length


def _parse_track(body: bytes):
    """Yield ``(abs_tick, kind, payload)`` events of one MTrk chunk.

    ``kind`` is ``"on"``, ``"off"`` or ``"tempo"``; other events are skipped.
    """
    pos = 0
    tick = 0
    status = None
    while pos < len(body):
        delta, pos = _read_varlen(body, pos)
        tick += delta
        if pos >= len(body):
            raise ScoreError("truncated track event")
        byte = body[pos]
        if byte == 0xFF:
            if pos + 1 >= len(body):
                raise ScoreError("truncated meta event")
            meta = body[pos + 1]
            length, pos = _read_varlen(body, pos + 2)
            payload = body[pos : pos + length]
            pos += length
            if meta == 0x51 and length == 3:
                yield tick, "tempo", int.from_bytes(payload, "big")
            elif meta == 0x2F:
                return
            continue
        if byte in (0xF0, 0xF7):
            length, pos = _read_varlen(body, pos + 1)
            pos += length
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise ScoreError(f"running status without prior status byte at tick {tick}")
        kind = status & 0xF0
        nbytes = 1 if kind in (0xC0, 0xD0) else 2
        args = body[pos : pos + nbytes]
        if len(args) != nbytes:
            raise ScoreError(f"truncated channel event at tick {tick}")
        pos += nbytes
        if kind == 0x90 and args[1] > 0:
            yield tick, "on", args[0]
        elif kind == 0x80 or (kind == 0x90 and args[1] == 0):
            yield tick, "off", args[0]


class _TempoMap:
    """Piecewise-constant tempo map converting ticks to seconds."""

    def __init__(self, tpq: int, changes: Iterable[tuple[int, int]]):
        self.tpq = tpq
        points = sorted(changes, key=lambda c: c[0])
        self._ticks = [0]
        self._tempos = [DEFAULT_TEMPO_US]
        self._seconds = [0.0]
        for tick, tempo in points:
            if tick == self._ticks[-1]:
                self._tempos[-1] = tempo
                continue
            self._seconds.append(self.seconds(tick))
            self._ticks.append(tick)
            self._tempos.append(tempo)

    def seconds(self, tick: int) -> float:
        i = len(self._ticks) - 1
        while self._ticks[i] > tick:
            i -= 1
        return self._seconds[i] + (tick - self._ticks[i]) * self._tempos[i] / (
            1e6 * self.tpq
        )


def parse_midi(data: bytes) -> Score:
    """Parse a monophonic Standard MIDI File into a :class:`Score`.

    Tempo meta-events from every track are merged into one tempo map; note
    events must all live in a single track.
    """
    chunks = list(_iter_chunks(data))
    if not chunks or chunks[0][0] != b"MThd":
        raise ScoreError("malformed header chunk: missing MThd")
    header = chunks[0][1]
    if len(header) < 6:
        raise ScoreError("malformed header chunk: too short")
    fmt, ntracks, division = struct.unpack(">HHH", header[:6])
    if fmt not in (0, 1):
        raise ScoreError(f"unsupported MIDI format {fmt}")
    if division & 0x8000:
        raise ScoreError("SMPTE time division is not supported")
    tpq = division
    if tpq == 0:
        raise ScoreError("malformed header chunk: zero ticks per quarter")

    tempo_changes = []
    note_tracks = []
    for index, (kind, body) in enumerate(c for c in chunks[1:] if c[0] == b"MTrk"):
        notes = []
        for tick, ev, value in _parse_track(body):
            if ev == "tempo":
                tempo_changes.append((tick, value))
            else:
                notes.append((tick, ev, value))
        if any(ev == "on" for _, ev, _ in notes):
            note_tracks.append((index, notes))
    if not note_tracks:
        raise ScoreError("no notes")
    if len(note_tracks) > 1:
        raise ScoreError(
            f"expected one melodic track, found notes in tracks "
            f"{[i for i, _ in note_tracks]}"
        )

    events = note_tracks[0][1]
    # Offs sort before ons at equal ticks so legato repeats pair correctly.
    events.sort(key=lambda e: (e[0], e[1] == "on"))
    open_notes: dict[int, deque] = defaultdict(deque)
    pairs = []
    onset_ticks = set()
    for tick, ev, pitch in events:
        if ev == "on":
            if tick in onset_ticks:
                raise ScoreError(f"simultaneous note onsets at tick {tick} (polyphony)")
            onset_ticks.add(tick)
            open_notes[pitch].append(tick)
        else:
            if not open_notes[pitch]:
                logger.warning("note-off without note-on (pitch %d, tick %d)", pitch, tick)
                continue
            start = open_notes[pitch].popleft()
            if tick == start:
                raise ScoreError(f"zero-length note at tick {tick}")
            pairs.append((start, tick, pitch))
    for pitch, ticks in open_notes.items():
        if ticks:
            raise ScoreError(f"unmatched note-on (pitch {pitch}) at tick {ticks[0]}")

    tmap = _TempoMap(tpq, tempo_changes)
    pairs.sort()
    notes = [
        NoteEvent(
            pitch=pitch,
            onset=tmap.seconds(start),
            offset=tmap.seconds(end),
            note_value=(end - start) / tpq,
        )
        for start, end, pitch in pairs
    ]
    return Score(notes=tuple(notes), ticks_per_quarter=tpq, source_kind="midi")


def write_midi(score: Score, tempo_us: int = DEFAULT_TEMPO_US) -> bytes:
    """Serialize ``score`` as a format-0 SMF at 960 ticks per quarter.

    Articulation and dynamic marks are dropped; MIDI has no slot for them.
    """
    ticks_per_second = WRITE_TPQ * 1e6 / tempo_us
    events = []
    for n in score.notes:
        on = round(n.onset * ticks_per_second)
        off = max(round(n.offset * ticks_per_second), on + 1)
        events.append((on, 1, bytes([0x90, n.pitch, 80])))
        events.append((off, 0, bytes([0x80, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    track = bytearray()
    track += b"\x00\xff\x51\x03" + tempo_us.to_bytes(3, "big")
    last = 0
    for tick, _, msg in events:
        track += _write_varlen(tick - last) + msg
        last = tick
    track += b"\x00\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, WRITE_TPQ)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


# ---------------------------------------------------------------------------
# MusicXML
# ---------------------------------------------------------------------------

_STEPS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_ARTICULATION_TAGS = {
    "staccato": Articulation.STACCATO,
    "accent": Articulation.ACCENT,
    "strong-accent": Articulation.MARCATO,
    "tenuto": Articulation.TENUTO,
}
_BEAT_UNITS = {"whole": 4.0, "half": 2.0, "quarter": 1.0, "eighth": 0.5, "16th": 0.25}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child(elem, name):
    for c in elem:
        if _local(c.tag) == name:
            return c
    return None


def _children(elem, name):
    return [c for c in elem if _local(c.tag) == name]


def _dynamic_from(dyn_elem) -> Optional[Dynamic]:
    for mark in dyn_elem:
        token = _local(mark.tag)
        try:
            return Dynamic(token)
        except ValueError:
            logger.warning("unrecognized dynamic %r ignored", token)
    return None


def _tempo_from_direction(direction) -> Optional[float]:
    """Quarter-note BPM carried by a <direction>, if any."""
    sound = _child(direction, "sound")
    if sound is not None and sound.get("tempo"):
        return float(sound.get("tempo"))
    for dtype in _children(direction, "direction-type"):
        metro = _child(dtype, "metronome")
        if metro is None:
            continue
        unit = _child(metro, "beat-unit")
        per_minute = _child(metro, "per-minute")
        if unit is None or per_minute is None:
            continue
        try:
            bpm = float(per_minute.text)
        except (TypeError, ValueError):
            continue
        scale = _BEAT_UNITS.get((unit.text or "").strip(), 1.0)
        if _child(metro, "beat-unit-dot") is not None:
            scale *= 1.5
        return bpm * scale
    return None


@dataclass
class _RawNote:
    pitch: int
    start: float  # beats
    length: float  # beats
    articulation: Optional[Articulation] = None
    dynamic: Optional[Dynamic] = None
    slur_starts: int = 0
    slur_stops: int = 0
    tie_stop: bool = False
    tie_start: bool = False
    inherited: list = field(default_factory=list)


def parse_musicxml(text: str) -> Score:
    """Parse a single-part, monophonic MusicXML ``score-partwise`` document.

    Ties merge into one event, slurs mark every covered note but the last as
    legato, and a dynamic applies to the first note at or after its position.
    Note offsets are the notated note ends (full value).
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ScoreError(f"malformed MusicXML: {exc}") from exc
    if _local(root.tag) != "score-partwise":
        raise ScoreError(f"unsupported root element <{_local(root.tag)}>")
    parts = _children(root, "part")
    if len(parts) != 1:
        raise ScoreError(f"expected a single part, found {len(parts)}")

    divisions = None
    position = 0.0  # beats
    tempo_points = [(0.0, 120.0)]
    pending_dynamic = None
    raw: list[_RawNote] = []

    for measure in _children(parts[0], "measure"):
        for elem in measure:
            tag = _local(elem.tag)
            if tag == "attributes":
                div = _child(elem, "divisions")
                if div is not None:
                    divisions = float(div.text)
            elif tag == "direction":
                bpm = _tempo_from_direction(elem)
                if bpm is not None:
                    tempo_points.append((position, bpm))
                for dtype in _children(elem, "direction-type"):
                    dyn = _child(dtype, "dynamics")
                    if dyn is not None:
                        pending_dynamic = _dynamic_from(dyn) or pending_dynamic
            elif tag == "sound" and elem.get("tempo"):
                tempo_points.append((position, float(elem.get("tempo"))))
            elif tag in ("backup", "forward"):
                if divisions is None:
                    raise ScoreError("missing <divisions> before first duration")
                dur = float(_child(elem, "duration").text) / divisions
                if tag == "backup":
                    raise ScoreError(
                        f"<backup> at beat {position:g}: multiple voices are not supported"
                    )
                position += dur
            elif tag == "note":
                if _child(elem, "grace") is not None:
                    continue
                if _child(elem, "chord") is not None:
                    raise ScoreError(f"chord at beat {position:g}: polyphony not supported")
                dur_elem = _child(elem, "duration")
                if dur_elem is None:
                    raise ScoreError(f"note without <duration> at beat {position:g}")
                if divisions is None:
                    raise ScoreError("missing <divisions> before first note")
                length = float(dur_elem.text) / divisions
                if _child(elem, "rest") is not None:
                    position += length
                    continue
                raw.append(_parse_note(elem, position, length, pending_dynamic))
                pending_dynamic = None
                position += length

    if not raw:
        raise ScoreError("no notes")
    merged = _merge_ties(raw)
    _apply_slurs(merged)
    to_seconds = _beat_clock(tempo_points)
    notes = [
        NoteEvent(
            pitch=r.pitch,
            onset=to_seconds(r.start),
            offset=to_seconds(r.start + r.length),
            note_value=r.length,
            articulation=r.articulation,
            dynamic=r.dynamic,
        )
        for r in merged
    ]
    return Score(notes=tuple(notes), ticks_per_quarter=WRITE_TPQ, source_kind="musicxml")


def _parse_note(elem, position, length, pending_dynamic) -> _RawNote:
    pitch_elem = _child(elem, "pitch")
    if pitch_elem is None:
        raise ScoreError(f"unpitched note at beat {position:g}")
    step = _child(pitch_elem, "step").text.strip()
    octave = int(_child(pitch_elem, "octave").text)
    alter_elem = _child(pitch_elem, "alter")
    alter = round(float(alter_elem.text)) if alter_elem is not None else 0
    note = _RawNote(
        pitch=(octave + 1) * 12 + _STEPS[step] + alter,
        start=position,
        length=length,
        dynamic=pending_dynamic,
    )
    for tie in _children(elem, "tie"):
        if tie.get("type") == "start":
            note.tie_start = True
        elif tie.get("type") == "stop":
            note.tie_stop = True
    for notations in _children(elem, "notations"):
        for item in notations:
            tag = _local(item.tag)
            if tag == "articulations":
                for art in item:
                    mapped = _ARTICULATION_TAGS.get(_local(art.tag))
                    if mapped is not None and note.articulation is None:
                        note.articulation = mapped
            elif tag == "slur":
                if item.get("type") == "start":
                    note.slur_starts += 1
                elif item.get("type") == "stop":
                    note.slur_stops += 1
            elif tag == "dynamics":
                note.dynamic = _dynamic_from(item) or note.dynamic
            elif tag == "tied":
                if item.get("type") == "start":
                    note.tie_start = True
                elif item.get("type") == "stop":
                    note.tie_stop = True
    return note


def _merge_ties(raw: list[_RawNote]) -> list[_RawNote]:
    merged: list[_RawNote] = []
    for note in raw:
        prev = merged[-1] if merged else None
        if (
            note.tie_stop
            and prev is not None
            and prev.tie_start
            and prev.pitch == note.pitch
            and abs(prev.start + prev.length - note.start) < 1e-9
        ):
            prev.length += note.length
            prev.tie_start = note.tie_start
            prev.slur_starts += note.slur_starts
            prev.slur_stops += note.slur_stops
            prev.articulation = prev.articulation or note.articulation
            prev.dynamic = prev.dynamic or note.dynamic
            continue
        merged.append(note)
    return merged


def _apply_slurs(notes: list[_RawNote]) -> None:
    depth = 0
    for note in notes:
        depth += note.slur_starts
        # The note that closes every open slur re-articulates; it stays unmarked.
        inside = depth > 0 and not (note.slur_stops >= depth)
        depth = max(depth - note.slur_stops, 0)
        if inside and note.articulation is None:
            note.articulation = Articulation.LEGATO


def _beat_clock(points: list[tuple[float, float]]):
    """Return a beat->seconds converter over piecewise-constant BPM."""
    points = sorted(points, key=lambda p: p[0])
    starts, bpms, secs = [], [], []
    for beat, bpm in points:
        if starts and beat == starts[-1]:
            bpms[-1] = bpm
            continue
        if starts:
            secs.append(secs[-1] + (beat - starts[-1]) * 60.0 / bpms[-1])
        else:
            secs.append(0.0)
        starts.append(beat)
        bpms.append(bpm)

    def to_seconds(beat: float) -> float:
        i = len(starts) - 1
        while starts[i] > beat:
            i -= 1
        return secs[i] + (beat - starts[i]) * 60.0 / bpms[i]

    return to_seconds


# ---------------------------------------------------------------------------
# JSON score documents
# ---------------------------------------------------------------------------

SCORE_SCHEMA = "gaussian_ems.score"
SCORE_VERSION = 1


def score_to_dict(score: Score) -> dict:
    notes = []
    for n in score.notes:
        d = asdict(n)
        d["articulation"] = n.articulation.value if n.articulation else None
        d["dynamic"] = n.dynamic.value if n.dynamic else None
        notes.append(d)
    return {
        "schema": SCORE_SCHEMA,
        "version": SCORE_VERSION,
        "ticks_per_quarter": score.ticks_per_quarter,
        "source_kind": score.source_kind,
        "notes": notes,
    }


def score_from_dict(doc: dict) -> Score:
    if doc.get("schema") != SCORE_SCHEMA or doc.get("version") != SCORE_VERSION:
        raise ScoreError("not a version-1 score document")
    notes = []
    for d in doc["notes"]:
        notes.append(
            NoteEvent(
                pitch=int(d["pitch"]),
                onset=float(d["onset"]),
                offset=float(d["offset"]),
                note_value=float(d["note_value"]),
                articulation=Articulation(d["articulation"]) if d.get("articulation") else None,
                dynamic=Dynamic(d["dynamic"]) if d.get("dynamic") else None,
            )
        )
    return Score(
        notes=tuple(notes),
        ticks_per_quarter=int(doc.get("ticks_per_quarter", WRITE_TPQ)),
        source_kind=doc.get("source_kind", "midi"),
    )


def dump_score(score: Score) -> str:
    return json.dumps(score_to_dict(score), indent=2)


def load_score(text: str) -> Score:
    return score_from_dict(json.loads(text))
