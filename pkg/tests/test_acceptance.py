"""Acceptance criteria 1-8, one test per criterion at the stated tolerance."""

import math
import time

import numpy as np
from scipy import integrate

from gaussian_ems.articulation import articulation_to_attack, dynamic_to_volume, scale_volume
from gaussian_ems.audio_features import extract_note_audio_features, note_timing_features, piece_tempo
from gaussian_ems.cli import main
from gaussian_ems.expression import classify, fit_expression_model, sample_truncated, save_model
from gaussian_ems.score_io import (
    Articulation,
    Dynamic,
    NoteEvent,
    parse_midi,
    parse_musicxml,
    write_midi,
)
from gaussian_ems.timing import TimingPlan, apply_plan, scale_tempo
from gaussian_ems.wavio import AudioBuffer

from helpers import (
    SR,
    base_score,
    build_training_corpus,
    metronomic_score,
    observe,
    random_score,
    report,
    truth_model,
    vibrato_tone,
)

DYNAMICS = {"ppp": 0.164, "pp": 0.313, "p": 0.484, "mp": 0.564, "mf": 0.664, "f": 0.773, "ff": 0.890, "fff": 1.00}
ARTICULATIONS = {"staccato": 0.545, "accent": 0.600, "marcato": 0.655, "tenuto": 0.545, "legato": 0.227}


def test_criterion_1_table_fidelity():
    bad = [k for k, v in DYNAMICS.items() if dynamic_to_volume(k) != v]
    bad += [k for k, v in ARTICULATIONS.items() if articulation_to_attack(k) != v]
    n = len(DYNAMICS) + len(ARTICULATIONS)
    assert report(1, "table fidelity", not bad, f"{n - len(bad)}/{n} exact")


def test_criterion_2_worked_example():
    v = scale_volume(0.661, Dynamic.P)
    assert report(2, "worked example p", abs(v - 0.482) <= 0.001, f"0.661 -> {v:.4f}")


def _truncated_mean(mu, sigma, lo, hi):
    pdf = lambda x: math.exp(-0.5 * ((x - mu) / sigma) ** 2)
    return integrate.quad(lambda x: x * pdf(x), lo, hi)[0] / integrate.quad(pdf, lo, hi)[0]


def test_criterion_3_truncation():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, inside = 0.0, True
    for mu in (0.2, 0.5, 0.8):
        for sigma in (0.05, 0.2):
            lo, hi = max(mu - sigma, 0.0), min(mu + sigma, 1.0)
            x = sample_truncated(mu, sigma, rng, size=100_000, unit=True)
            inside &= bool(np.all((x >= lo) & (x <= hi)))
            worst = max(worst, abs(x.mean() - _truncated_mean(mu, sigma, lo, hi)))
    elapsed = time.perf_counter() - start
    ok = inside and worst <= 0.005 and elapsed < 10.0
    assert report(3, "truncated sampling", ok, f"max |mean err| {worst:.5f}, {elapsed:.2f} s")


def test_criterion_4_timing_identity():
    rng = np.random.default_rng(4)
    worst_identity, worst_tempo = 0.0, 0.0
    for _ in range(200):
        s = random_score(rng)
        plan = TimingPlan(piece_tempo(s), (1.0,) * (len(s) - 1), tuple(f.coverage for f in note_timing_features(s)))
        out = apply_plan(s, plan)
        err = np.max(np.abs(np.array([out.onsets, out.offsets]) - np.array([s.onsets, s.offsets])))
        worst_identity = max(worst_identity, err)
        tau = float(rng.uniform(0.05, 3.0))
        worst_tempo = max(worst_tempo, abs(piece_tempo(scale_tempo(s, tau)) - tau))
    ok = worst_identity <= 1e-9 and worst_tempo <= 1e-9
    assert report(4, "timing identity", ok, f"identity {worst_identity:.1e} s, tempo {worst_tempo:.1e}")


def _note_over(x, pitch):
    return NoteEvent(pitch, 0.0, len(x) / SR, 1.0)


def test_criterion_5_feature_oracle():
    errors = {"volume": 0.0, "vibrato": 0.0, "brightness": 0.0, "peak_position": 0.0}
    h = np.arange(1, 13)
    for r, pitch, freq, peak in [(0.3, 67, 392.0, 0.3), (0.6, 69, 440.0, 0.5), (0.85, 64, 329.63, 0.7)]:
        amps = r ** (h - 1)
        tone = vibrato_tone(freq, 6.0, 20.0, amp=1.0, harmonics=tuple(amps))
        tone *= 0.1 / np.sqrt(np.mean(tone**2))  # -20 dB RMS
        flat = extract_note_audio_features(AudioBuffer(tone), _note_over(tone, pitch))
        errors["volume"] = max(errors["volume"], abs(flat.volume + 20.0))
        errors["vibrato"] = max(errors["vibrato"], abs(flat.vibrato - 6.0))
        errors["brightness"] = max(errors["brightness"], abs(flat.brightness - np.dot(h, amps) / amps.sum()))

        # Triangular dB envelope peaking at a known fraction of the frame span.
        n, win, hop = len(tone), 736, 160
        frames = 1 + (n - win) // hop
        centre = win / 2 + peak * (frames - 1) * hop
        db = -12.0 * np.abs(np.arange(n) - centre) / n
        shaped = tone * 10 ** (db / 20)
        f = extract_note_audio_features(AudioBuffer(shaped), _note_over(shaped, pitch))
        errors["peak_position"] = max(errors["peak_position"], abs(f.peak_position - peak))
    limits = {"volume": 0.5, "vibrato": 0.3, "brightness": 0.1, "peak_position": 0.05}
    ok = all(errors[k] <= limits[k] for k in limits)
    detail = ", ".join(f"{k} {errors[k]:.3f}/{limits[k]}" for k in limits)
    assert report(5, "feature extraction oracle", ok, detail)


def test_criterion_6_pipeline_round_trip():
    start = time.perf_counter()
    model = fit_expression_model(build_training_corpus(recordings_per_emt=6, seed=1234))
    truth = truth_model()
    rng = np.random.default_rng(606)
    correct = total = 0
    seeds = set()
    for emt in truth.emts:
        for _ in range(20):
            seed = int(rng.integers(2**31))
            assert seed not in seeds
            seeds.add(seed)
            features = observe(truth, emt, base_score(rng), seed)
            correct += classify(features, model)[0][0] == emt
            total += 1
    elapsed = time.perf_counter() - start
    ok = correct >= 54 and elapsed < 300
    assert report(6, "render-extract-classify", ok, f"{correct}/{total} correct, {elapsed:.1f} s")


def _xml_note(inner="", direction=""):
    return (
        direction
        + "<note><pitch><step>A</step><octave>4</octave></pitch><duration>1</duration>"
        + inner
        + "</note>"
    )


def test_criterion_7_parser_round_trips():
    tick = 0.5 / 960  # one 960-tpq tick at 120 BPM
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        original = random_score(rng)
        first = parse_midi(write_midi(original))
        second = parse_midi(write_midi(first))
        assert [n.pitch for n in first.notes] == [n.pitch for n in second.notes]
        for a, b in ((original, first), (first, second)):
            diff = np.abs(np.array([a.onsets, a.offsets]) - np.array([b.onsets, b.offsets]))
            worst = max(worst, float(diff.max()))

    tags = {
        "staccato": Articulation.STACCATO,
        "accent": Articulation.ACCENT,
        "strong-accent": Articulation.MARCATO,
        "tenuto": Articulation.TENUTO,
    }
    body = "".join(_xml_note(f"<notations><articulations><{t}/></articulations></notations>") for t in tags)
    body += "".join(
        _xml_note(direction=f"<direction><direction-type><dynamics><{d.value}/></dynamics></direction-type></direction>")
        for d in Dynamic
    )
    body += _xml_note('<notations><slur type="start"/></notations>') + _xml_note(
        '<notations><slur type="stop"/></notations>'
    )
    xml = (
        "<score-partwise><part id='P1'><measure number='1'>"
        "<attributes><divisions>1</divisions></attributes>" + body + "</measure></part></score-partwise>"
    )
    notes = parse_musicxml(xml).notes
    mapped = [n.articulation for n in notes[: len(tags)]] == list(tags.values())
    mapped &= [n.dynamic for n in notes[len(tags) : len(tags) + len(Dynamic)]] == list(Dynamic)
    mapped &= notes[-2].articulation is Articulation.LEGATO and notes[-1].articulation is None
    ok = worst <= tick and mapped
    assert report(7, "parser round trips", ok, f"max MIDI drift {worst:.1e} s, tags mapped: {mapped}")


def test_criterion_8_determinism(tmp_path):
    model = tmp_path / "model.json"
    model.write_bytes(save_model(truth_model()))
    score = tmp_path / "piece.mid"
    score.write_bytes(write_midi(metronomic_score([60, 62, 64, 65, 67, 69], [1, 1, 1, 1, 2, 2])))
    outs = []
    for name in ("a.wav", "b.wav"):
        out = tmp_path / name
        args = ["render", str(score), "--emt", "tranquillo", "--model", str(model), "--seed", "31", "--out", str(out)]
        assert main(args) == 0
        outs.append(out.read_bytes())
    assert report(8, "deterministic render", outs[0] == outs[1], f"{len(outs[0])} bytes")
