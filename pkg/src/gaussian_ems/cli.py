"""Command-line interface: fit, render, extract, classify, tables."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .articulation import apply_score_markings, format_tables
from .audio_features import FEATURE_NAMES, FeatureError, PieceFeatures, extract_piece_features
from .expression import (
    ModelError,
    classify,
    fit_expression_model,
    load_model,
    normalize_recording,
    render_params,
    save_model,
)
from .score_io import Score, ScoreError, dump_score, load_score, parse_midi, parse_musicxml, write_midi
from .synth import SynthError, render_audio
from .timing import modify_midi
from .wavio import read_wav, write_wav

logger = logging.getLogger("gaussian_ems")

MANIFEST_SCHEMA = "gaussian_ems.manifest"
PARAMS_SCHEMA = "gaussian_ems.render_params"


class CLIError(Exception):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    score_path: Path
    audio_path: Path
    emt: str
    performer: Optional[str] = None


def read_score(path) -> Score:
    """Load a score by file extension (.mid/.midi, .xml/.musicxml, .json)."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in (".mid", ".midi"):
            return parse_midi(path.read_bytes())
        if suffix in (".xml", ".musicxml"):
            return parse_musicxml(path.read_text(encoding="utf-8"))
        if suffix == ".json":
            return load_score(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from exc
    except ScoreError as exc:
        raise CLIError(f"{path}: {exc}") from exc
    raise CLIError(f"{path}: unknown score format {suffix!r}")


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc})") from exc
    if doc.get("schema") != MANIFEST_SCHEMA or doc.get("version") != 1:
        raise CLIError(f"{path}: not a version-1 manifest")
    base = path.parent
    entries = []
    for i, e in enumerate(doc.get("entries", [])):
        emt = str(e.get("emt", "")).strip()
        if not emt:
            raise CLIError(f"{path}: entry {i} has an empty emt")
        entries.append(
            ManifestEntry(
                score_path=base / e["score_path"],
                audio_path=base / e["audio_path"],
                emt=emt,
                performer=e.get("performer"),
            )
        )
    if not entries:
        raise CLIError(f"{path}: manifest has no entries")
    return entries


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from exc


def _extract(score_path: Path, audio_path: Path) -> PieceFeatures:
    score = read_score(score_path)
    audio = read_wav(_read_bytes(audio_path))
    try:
        return extract_piece_features(score, audio)
    except FeatureError as exc:
        raise CLIError(f"{audio_path}: {exc}") from exc


def _extract_entry(entry: ManifestEntry) -> tuple[str, PieceFeatures]:
    return entry.emt, normalize_recording(_extract(entry.score_path, entry.audio_path))


def _write(path, data) -> None:
    path = Path(path)
    if isinstance(data, str):
        path.write_text(data, encoding="utf-8")
    else:
        path.write_bytes(data)


def cmd_fit(args) -> int:
    entries = load_manifest(args.manifest)
    for e in entries:
        for p in (e.score_path, e.audio_path):
            if not p.is_file():
                raise CLIError(f"missing file: {p}")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            corpus = list(pool.map(_extract_entry, entries))
    else:
        corpus = [_extract_entry(e) for e in entries]
    model = fit_expression_model(corpus)
    _write(args.out, save_model(model))

    header = ["emt", "tempo"] + list(FEATURE_NAMES)
    print("\t".join(header))
    for emt in model.emts:
        cells = [emt, "%.4f±%.4f" % model.tempo[emt]]
        cells += ["%.4f±%.4f" % model.features[emt][name] for name in FEATURE_NAMES]
        print("\t".join(cells))
    return 0


def _load_model_file(path):
    try:
        return load_model(_read_bytes(Path(path)))
    except ModelError as exc:
        raise CLIError(f"{path}: {exc}") from exc


def cmd_render(args) -> int:
    score = read_score(args.score)
    model = _load_model_file(args.model)
    model.check_emt(args.emt)
    rng = np.random.default_rng(args.seed)
    modified, plan = modify_midi(score, model, args.emt, rng)
    sampled = render_params(model, args.emt, len(modified.notes), rng)
    params = sampled
    if score.source_kind == "musicxml":
        params = apply_score_markings(modified, sampled)
    audio = render_audio(modified, params, model.denorm)
    _write(args.out, write_wav(audio))

    if args.dump_params:
        doc = {
            "schema": PARAMS_SCHEMA,
            "version": 1,
            "emt": args.emt,
            "seed": args.seed,
            "timing_plan": plan.to_dict(),
            "sampled": [p.to_dict() for p in sampled],
            "params": [p.to_dict() for p in params],
        }
        _write(args.dump_params, json.dumps(doc, indent=2))
    if args.dump_score:
        if Path(args.dump_score).suffix.lower() in (".mid", ".midi"):
            _write(args.dump_score, write_midi(modified))
        else:
            _write(args.dump_score, dump_score(modified))
    return 0


def cmd_extract(args) -> int:
    features = _extract(Path(args.score), Path(args.audio))
    if args.normalize:
        features = normalize_recording(features)
    _write(args.out, json.dumps(features.to_dict(), indent=2))
    return 0


def cmd_classify(args) -> int:
    try:
        doc = json.loads(_read_bytes(Path(args.features)))
        features = PieceFeatures.from_dict(doc)
    except (json.JSONDecodeError, FeatureError) as exc:
        raise CLIError(f"{args.features}: {exc}") from exc
    if not features.normalized:
        features = normalize_recording(features)
    model = _load_model_file(args.model)
    for emt, loglik in classify(features, model):
        print(f"{emt}\t{loglik:.4f}")
    return 0


def cmd_tables(args) -> int:
    print(format_tables())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaussian-ems",
        description="Render EMT-conditioned violin performances from scores.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an expression model from a corpus manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--jobs", type=int, default=1, help="parallel feature extraction")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render a score under an EMT")
    p.add_argument("score")
    p.add_argument("--emt", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="WAV file to write")
    p.add_argument("--dump-params", help="write the timing plan and render parameters (JSON)")
    p.add_argument("--dump-score", help="write the modified score (.json, or .mid for MIDI)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("extract", help="extract features from an aligned score and WAV")
    p.add_argument("score")
    p.add_argument("audio")
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true", help="emit per-recording normalized values")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("classify", help="rank EMTs for a feature document")
    p.add_argument("features")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("tables", help="print the dynamics and articulation tables")
    p.set_defaults(func=cmd_tables)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CLIError, ModelError, ScoreError, FeatureError, SynthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
