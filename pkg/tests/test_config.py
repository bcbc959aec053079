import pytest
import yaml

from anchorpipe.config import (SEED_ENV, PipelineConfig, build_config, config_from_dict, config_from_yaml,
                               config_to_yaml, write_config_echo)
from anchorpipe.errors import ConfigError
from anchorpipe.linting import lint_config


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


def test_defaults():
    cfg = build_config()
    assert cfg == PipelineConfig()
    assert cfg.n_prior == 2 and cfg.embed_dim == 200 and cfg.image_hw == (64, 64)
    assert cfg.gan.perceptual_weights == (0.25, 0.5, 1.0)


def test_layers_override_in_order(tmp_path, monkeypatch):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 5, "seq2au": {"steps": 7}}), encoding="utf-8")
    monkeypatch.setenv(SEED_ENV, "3")
    assert build_config().seed == 3
    assert build_config(path).seed == 5
    cfg = build_config(path, {"seed": 9, "gan": {"steps": 11}})
    assert (cfg.seed, cfg.seq2au.steps, cfg.gan.steps) == (9, 7, 11)
    assert cfg.seq2au.hidden_size == 128


def test_bad_env_seed(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "abc")
    with pytest.raises(ConfigError) as exc:
        build_config()
    assert exc.value.code == "E103"


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"seq2au": {"hidden": 3}})
    assert exc.value.code == "E101"
    with pytest.raises(ConfigError):
        config_from_dict({"colour": "blue"})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        build_config(tmp_path / "none.yaml")
    assert exc.value.code == "E104"


def test_echo_is_a_valid_config(tmp_path, tiny_cfg):
    path = write_config_echo(tiny_cfg, tmp_path, "train-seq2au", {"steps": 4})
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    assert doc["command"] == "train-seq2au" and doc["args"] == {"steps": 4}
    assert build_config(path) == tiny_cfg


def test_yaml_round_trip(tiny_cfg):
    assert config_from_yaml(config_to_yaml(tiny_cfg)) == tiny_cfg


def test_trace_lists_layers(tmp_path, capsys):
    build_config(None, {"seed": 1}, trace=True)
    out = capsys.readouterr().out
    assert "defaults" in out and "command line: seed" in out


def test_lint_errors_abort(tmp_path):
    with pytest.raises(ConfigError) as exc:
        build_config(None, {"lambda_fm": -1.0})
    assert exc.value.code == "E201"


@pytest.mark.parametrize("overrides, code", [
    ({"n_prior": -1}, "E110"),
    ({"image_hw": [30, 30]}, "E114"),
    ({"gan": {"gan_mode": "wgan"}}, "E120"),
    ({"gan": {"scheduled_sampling": 1.5}}, "E121"),
    ({"seq2au": {"batch_size": 0}}, "E122"),
    ({"gan": {"steps": -1}}, "E123"),
    ({"gan": {"d_layers": 1}}, "E124"),
    ({"device": "gpu"}, "E126"),
    ({"gan": {"perceptual_weights": [1.0, -0.5]}}, "E202"),
])
def test_lint_codes(overrides, code):
    issues = lint_config(PipelineConfig().replace(**overrides))
    assert ("ERROR", code) in [(lvl, c) for lvl, c, _ in issues]


def test_lint_warnings_do_not_abort(capsys):
    cfg = build_config(None, {"lambda_fm": 0.0, "lambda_vgg": 0.0, "n_prior": 6})
    assert cfg.n_prior == 6
    out = capsys.readouterr().out
    assert "[W301]" in out and "[W302]" in out
    assert [c for _, c, _ in lint_config(PipelineConfig())] == []


def test_device_forms():
    for device in ("cpu", "cuda", "cuda:1", "mps"):
        assert lint_config(PipelineConfig(device=device)) == []


@pytest.mark.parametrize("data, key", [
    ({"n_prior": "two"}, "n_prior"),
    ({"seq2au": {"steps": 2.5}}, "seq2au.steps"),
    ({"gan": {"flm_per_step": "yes"}}, "gan.flm_per_step"),
    ({"image_hw": 64}, "image_hw"),
    ({"gan": {"perceptual_weights": [1.0, "x"]}}, "gan.perceptual_weights[1]"),
    ({"device": 0}, "device"),
])
def test_wrongly_typed_values_are_config_errors(data, key):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert exc.value.code == "E106"
    assert key in str(exc.value)


def test_numbers_are_coerced_to_the_field_type():
    cfg = config_from_dict({"lambda_fm": 3, "seq2au": {"lr": "1e-3"}, "embeddings": None})
    assert cfg.lambda_fm == 3.0 and isinstance(cfg.lambda_fm, float)
    assert cfg.seq2au.lr == 0.001
    assert cfg.embeddings is None
