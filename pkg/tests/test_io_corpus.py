import numpy as np
import pytest

from anchorpipe.core import AU_DIM, AUPS_NAMES, AUPSVector, FrameImage, LandmarkSet
from anchorpipe.errors import DataError, FormatError
from anchorpipe.io_corpus import (load_corpus, read_aups_csv, read_avg_flm_csv, read_flm_csv, read_frame_png,
                                  read_manifest, write_aups_csv, write_avg_flm_csv, write_flm_csv,
                                  write_frame_png, write_gif)


def test_aups_csv_stores_raw_units(tmp_path):
    v = AUPSVector(tuple([0.5] * AU_DIM), (0.25, -0.5, 1.0), True)
    path = write_aups_csv(tmp_path / "aups.csv", [v, AUPSVector.zeros()])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(["frame", *AUPS_NAMES])
    assert lines[1].startswith("0,2.500000,")
    back = read_aups_csv(path)
    assert all(b.normalized for b in back)
    assert np.allclose(back[0].as_array(), v.as_array(), atol=1e-6)
    raw = read_aups_csv(path, normalized=False)
    assert raw[0].au[0] == pytest.approx(2.5)


def test_aups_csv_errors(tmp_path):
    with pytest.raises(DataError) as exc:
        read_aups_csv(tmp_path / "missing.csv")
    assert exc.value.code == "E401"

    bad = tmp_path / "bad.csv"
    bad.write_text("frame,au01\n0,1.0\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_aups_csv(bad)

    out_of_range = tmp_path / "range.csv"
    row = ["0"] + ["6.0"] + ["0.0"] * (len(AUPS_NAMES) - 1)
    out_of_range.write_text(",".join(["frame", *AUPS_NAMES]) + "\n" + ",".join(row) + "\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_aups_csv(out_of_range)


def test_landmark_files(tmp_path):
    sets = [LandmarkSet(((0.1, 0.2), (0.3, 0.4))), LandmarkSet(((0.5, 0.6), (0.7, 0.8)))]
    back = read_flm_csv(write_flm_csv(tmp_path / "flm.csv", sets), 2)
    assert [s.points for s in back] == [s.points for s in sets]
    avg = LandmarkSet(((0.25, 0.75),))
    assert read_avg_flm_csv(write_avg_flm_csv(tmp_path / "avg.csv", avg), 1) == avg
    with pytest.raises(FormatError):
        read_avg_flm_csv(tmp_path / "avg.csv", 2)


def test_png_frames_are_lossless_for_uint8_content(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
    frame = FrameImage.from_uint8(arr)
    back = read_frame_png(write_frame_png(tmp_path / "f.png", frame))
    assert np.array_equal(back.to_uint8(), arr)
    with pytest.raises(DataError):
        read_frame_png(tmp_path / "none.png")


def test_gif_is_written(tmp_path):
    frames = [FrameImage.blank(8, 8), FrameImage(np.full((8, 8, 3), 0.5, dtype=np.float32))]
    path = write_gif(tmp_path / "out.gif", frames, fps=12)
    assert path.read_bytes()[:6] in (b"GIF87a", b"GIF89a")


def test_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        read_manifest(tmp_path / "manifest.json")
    (tmp_path / "manifest.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "manifest.json")
    (tmp_path / "manifest.json").write_text('{"samples": 3}', encoding="utf-8")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "manifest.json")


def test_load_corpus(corpus_dir, toy_sentences):
    corpus = load_corpus(corpus_dir)
    assert len(corpus) == len(toy_sentences)
    assert corpus.texts() == toy_sentences
    rec = corpus.records[0]
    assert len(rec.frames) == len(rec.aups_seq) == 8
    assert (rec.frames[0].height, rec.frames[0].width) == (16, 16)
    assert len(corpus.avg_flm) == 12

    light = load_corpus(corpus_dir, load_frames=False)
    assert light.records[0].frames == ()
