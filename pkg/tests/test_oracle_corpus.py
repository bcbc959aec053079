"""Synthetic ground truth: viseme table, renderer, corpus files."""
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from anchorpipe.core import AU_DIM, AUPSVector, au_index
from anchorpipe.errors import ContractError, EmptyInputError
from anchorpipe.io_corpus import landmark_columns, read_avg_flm_csv
from anchorpipe.oracle_corpus import (RenderSpec, default_viseme_table, face_landmarks, generate_corpus,
                                      interpolate_keyframes, mouth_pixel_count, render_face, render_sample,
                                      sentence_to_aups, word_to_aups)

words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz'", min_size=1, max_size=10)
SPEC = RenderSpec(height=32, width=32, supersample=2)


def _with(**aus) -> AUPSVector:
    au = [0.0] * AU_DIM
    for name, value in aus.items():
        au[au_index(name)] = value
    return AUPSVector(tuple(au), (0.0, 0.0, 0.0), True)


@given(words)
def test_word_maps_to_a_fixed_pattern(word):
    table = default_viseme_table(seed=7)
    assert 0 <= table.pattern_index(word) < 8
    assert table.pattern_index(word) == default_viseme_table(seed=7).pattern_index(word)
    seq = word_to_aups(word, table)
    assert len(seq) == table.frames_per_word
    assert seq[0] == AUPSVector.zeros(normalized=True)


def test_keyframes_are_hit_when_frames_equal_keys():
    table = default_viseme_table(frames_per_word=3)
    keys = table.keyframes("news")
    assert tuple(word_to_aups("news", table)) == keys


def test_interpolation_stays_between_keyframes():
    a, b = _with(au26=0.0), _with(au26=1.0)
    seq = interpolate_keyframes([a, b], 5)
    values = [v.au[au_index("au26")] for v in seq]
    assert values == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])


def test_sentence_length_is_words_times_frames_per_word():
    table = default_viseme_table(frames_per_word=4)
    assert len(sentence_to_aups("Good evening, and welcome!", table)) == 16
    with pytest.raises(EmptyInputError):
        sentence_to_aups(" ,, ", table)


def test_seed_changes_the_word_assignment():
    vocab = [f"word{i}" for i in range(40)]
    a = [default_viseme_table(seed=0).pattern_index(w) for w in vocab]
    b = [default_viseme_table(seed=1).pattern_index(w) for w in vocab]
    assert a != b


def test_rendering_is_deterministic():
    v = _with(au25=0.4, au26=0.7, au12=0.3)
    a = render_face(v, SPEC).to_uint8()
    b = render_face(v, SPEC).to_uint8()
    assert a.tobytes() == b.tobytes()
    assert a.shape == (32, 32, 3)


def test_mouth_area_grows_with_jaw_drop():
    spec = RenderSpec(height=64, width=64, supersample=2)
    counts = [mouth_pixel_count(render_face(_with(au26=k), spec), spec) for k in np.linspace(0.0, 1.0, 6)]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] > counts[0]


def test_lower_lip_and_jaw_follow_jaw_drop():
    grid = [face_landmarks(_with(au26=k), SPEC).as_array() for k in np.linspace(0.0, 1.0, 5)]
    lower_lip = [pts[9, 1] for pts in grid]
    jaw = [pts[10, 1] for pts in grid]
    assert all(b > a for a, b in zip(lower_lip, lower_lip[1:]))
    assert all(b > a for a, b in zip(jaw, jaw[1:]))


def test_brow_raise_lifts_brow_landmarks():
    neutral = face_landmarks(_with(), SPEC).as_array()
    raised = face_landmarks(_with(au01=1.0, au02=1.0), SPEC).as_array()
    assert np.all(raised[4:6, 1] < neutral[4:6, 1])
    assert np.allclose(raised[:4], neutral[:4])


def test_pose_moves_the_whole_face():
    neutral = face_landmarks(_with(), SPEC).as_array()
    turned = face_landmarks(AUPSVector((0.0,) * AU_DIM, (0.0, 0.8, 0.0), True), SPEC).as_array()
    assert np.all(turned[:, 0] > neutral[:, 0] - 1e-12)
    assert not np.allclose(turned, neutral)


@given(st.lists(st.floats(0.0, 1.0), min_size=AU_DIM, max_size=AU_DIM),
       st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)))
def test_landmarks_stay_in_the_unit_square(au, pose):
    pts = face_landmarks(AUPSVector(tuple(au), pose, True), SPEC).as_array()
    assert pts.shape == (12, 2)
    assert np.all((pts >= 0.0) & (pts <= 1.0))


def test_raw_vectors_are_rejected():
    with pytest.raises(ContractError):
        render_face(AUPSVector.zeros(normalized=False), SPEC)
    with pytest.raises(ContractError):
        face_landmarks(AUPSVector.zeros(normalized=False), SPEC)


def test_rendered_sample_is_consistent():
    sample = render_sample("s00000", "hello there", default_viseme_table(), SPEC)
    assert len(sample.aups) == len(sample.frames) == len(sample.landmarks) == 8


# ---------- corpus files ----------

def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_regeneration_is_byte_identical(tmp_path, tiny_cfg, toy_sentences, corpus_factory):
    corpus_factory(tmp_path / "a", tiny_cfg, toy_sentences)
    corpus_factory(tmp_path / "b", tiny_cfg, toy_sentences)
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_worker_count_does_not_change_output(tmp_path, tiny_cfg, toy_sentences, corpus_factory):
    corpus_factory(tmp_path / "one", tiny_cfg, toy_sentences, workers=1)
    corpus_factory(tmp_path / "three", tiny_cfg, toy_sentences, workers=3)
    assert _tree_bytes(tmp_path / "one") == _tree_bytes(tmp_path / "three")


def test_average_landmarks_match_a_brute_force_mean(corpus_dir):
    manifest = json.loads((corpus_dir / "manifest.json").read_text(encoding="utf-8"))
    cols = landmark_columns(12)
    rows = [pd.read_csv(corpus_dir / "samples" / s["id"] / "flm.csv")[cols].to_numpy()
            for s in manifest["samples"]]
    brute = np.concatenate(rows).mean(axis=0)
    stored = read_avg_flm_csv(corpus_dir / "avg_flm.csv", 12).as_array().reshape(-1)
    assert np.max(np.abs(brute - stored)) <= 1e-6


def test_manifest_lists_samples_in_order(corpus_dir, toy_sentences):
    manifest = json.loads((corpus_dir / "manifest.json").read_text(encoding="utf-8"))
    assert [s["id"] for s in manifest["samples"]] == [f"s{i:05d}" for i in range(len(toy_sentences))]
    assert [s["text"] for s in manifest["samples"]] == toy_sentences
    assert manifest["frames_per_word"] == 4


def test_empty_sentence_list_is_rejected(tmp_path):
    with pytest.raises(EmptyInputError):
        generate_corpus(["  ", ""], default_viseme_table(), SPEC, tmp_path / "c", quiet=True)
