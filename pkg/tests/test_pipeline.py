import pytest

from anchorpipe.errors import EvaluationError
from anchorpipe.io_corpus import read_aups_csv, read_frames
from anchorpipe.pipeline import run_synthesis, synthesize, write_synthesis
from anchorpipe.train_eval import load_gan_model, load_seq2au_model, train_gan, train_seq2au


@pytest.fixture
def models(tmp_path, tiny_cfg, corpus):
    s1 = train_seq2au(corpus, tiny_cfg.replace(seq2au={"steps": 1}), tmp_path / "s1", quiet=True)
    s2 = train_gan(corpus, tiny_cfg.replace(gan={"steps": 1}), tmp_path / "s2", quiet=True)
    return load_seq2au_model(s1.path), load_gan_model(s2.path)


def test_synthesize_gives_one_frame_per_predicted_vector(models):
    seq2au, gan = models
    result = synthesize("good evening", seq2au, gan, quiet=True)
    assert len(result.frames) == len(result.aups) >= 1


def test_outputs_on_disk(tmp_path, models):
    seq2au, gan = models
    out = tmp_path / "synth"
    result = run_synthesis("hello again", seq2au, gan, out, gif=True, quiet=True)
    rows = read_aups_csv(out / "aups.csv")
    assert len(rows) == len(result.aups)
    frames = read_frames(out / "frames", len(rows))
    assert all((f.height, f.width) == (16, 16) for f in frames)
    assert (out / "synth.gif").exists()
    assert not (out / "frames" / f"{len(rows):05d}.png").exists()


def test_no_gif_unless_asked(tmp_path, models):
    seq2au, gan = models
    result = synthesize("hello", seq2au, gan, quiet=True)
    write_synthesis(result, tmp_path, quiet=True)
    assert not (tmp_path / "synth.gif").exists()


def test_empty_prediction_is_an_evaluation_error(models, monkeypatch):
    seq2au, gan = models
    monkeypatch.setattr("anchorpipe.pipeline.predict_aups", lambda text, model: [])
    with pytest.raises(EvaluationError):
        synthesize("hello", seq2au, gan, quiet=True)
