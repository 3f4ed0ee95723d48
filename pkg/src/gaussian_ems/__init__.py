"""EMT-conditioned expressive violin rendering.

Per-EMT Gaussian models over tempo, timing and note-level audio features
drive a timing rewrite of the input score and a harmonic-plus-noise
synthesizer.
"""

from .articulation import apply_score_markings, articulation_to_attack, dynamic_to_volume
from .audio_features import (
    NoteAudioFeatures,
    NoteTimingFeatures,
    PieceFeatures,
    extract_note_audio_features,
    extract_piece_features,
    f0_track,
    note_timing_features,
    piece_tempo,
)
from .expression import (
    DenormTable,
    ExpressionModel,
    RenderParams,
    classify,
    fit_expression_model,
    load_model,
    normalize_recording,
    render_params,
    sample_truncated,
    save_model,
)
from .kernels import BACKEND
from .score_io import NoteEvent, Score, parse_midi, parse_musicxml, write_midi
from .synth import render_audio, synth_note
from .timing import TimingPlan, apply_coverage, modify_midi, resample_iois, scale_tempo
from .wavio import AudioBuffer, read_wav, write_wav

__version__ = "0.1.0"
