from __future__ import annotations
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import yaml
from .errors import ConfigError
from .logging import _print

SEED_ENV = "ANCHORPIPE_SEED"


@dataclass(frozen=True)
class Seq2AUConfig:
    hidden_size: int = 128
    num_layers: int = 1
    lambda_stop: float = 0.5
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    steps: int = 2000
    teacher_forcing: float = 1.0
    finetune_embeddings: bool = False
    checkpoint_every: int = 500


@dataclass(frozen=True)
class GANConfig:
    ngf: int = 32
    ndf: int = 32
    n_downsample: int = 2
    n_blocks: int = 4
    num_scales: int = 2
    d_layers: int = 4
    gan_mode: str = "vanilla"
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.5, 0.999)
    batch_size: int = 4
    steps: int = 3000
    scheduled_sampling: float = 0.0
    sigma_px: float = 1.5
    flm_per_step: bool = False
    perceptual_weights: Tuple[float, ...] = (0.25, 0.5, 1.0)
    checkpoint_every: int = 500


@dataclass(frozen=True)
class CorpusConfig:
    frames_per_word: int = 4
    num_patterns: int = 8
    landmark_count: int = 12
    supersample: int = 4
    workers: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    n_prior: int = 2
    image_hw: Tuple[int, int] = (64, 64)
    embed_dim: int = 200
    t_max: int = 120
    lambda_fm: float = 10.0
    lambda_vgg: float = 10.0
    embeddings: Optional[str] = None
    fps: int = 12
    device: str = "cpu"
    seq2au: Seq2AUConfig = field(default_factory=Seq2AUConfig)
    gan: GANConfig = field(default_factory=GANConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def replace(self, **overrides: Any) -> "PipelineConfig":
        return config_from_dict(deep_merge(self.to_dict(), overrides))


_SECTIONS = {"seq2au": Seq2AUConfig, "gan": GANConfig, "corpus": CorpusConfig}


def _plain(value: Any) -> Any:
    # tuples become lists so the YAML echo stays plain
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def deep_merge(a: Any, b: Any) -> Any:
    if isinstance(a, dict) and isinstance(b, dict):
        out = dict(a)
        for k, v in b.items():
            out[k] = deep_merge(out[k], v) if k in out else v
        return out
    return b


def _typed(value: Any, default: Any, key: str) -> Any:
    """``value`` checked against the type of the field's default; floats accept ints and YAML's ``1e-3`` strings."""
    def bad(expected: str):
        return ConfigError(f"{key} must be {expected}, got {value!r}", code="E106")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool):
            raise bad("a number")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise bad("a number")
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise bad("a list")
        return tuple(_typed(v, default[0], f"{key}[{i}]") for i, v in enumerate(value)) if default else tuple(value)
    # str, or None for optional paths
    if value is None and default is None:
        return None
    if not isinstance(value, str):
        raise bad("a string")
    return value


def _coerce(cls, data: Dict[str, Any], where: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {where}: {', '.join(unknown)}", code="E101")
    defaults = cls()
    prefix = "" if cls is PipelineConfig else f"{where}."
    kwargs = {name: _typed(value, getattr(defaults, name), prefix + name) for name, value in data.items()}
    return cls(**kwargs)


def config_from_dict(data: Optional[Dict[str, Any]]) -> PipelineConfig:
    data = dict(data or {})
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.pop(name, None) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config section '{name}' must be a mapping", code="E102")
        sections[name] = _coerce(cls, raw, name)
    base = _coerce(PipelineConfig, data, "top level")
    return dataclasses.replace(base, **sections)


def yaml_load_if_exists(path: Path):
    if path.exists():
        return yaml.safe_load(path.read_text(encoding="utf-8"))
    return None


def assemble_layers(config_file: Optional[Path]) -> List[Tuple[str, Dict[str, Any]]]:
    layers: List[Tuple[str, Dict[str, Any]]] = [("defaults", PipelineConfig().to_dict())]
    env_seed = os.environ.get(SEED_ENV)
    if env_seed not in (None, ""):
        try:
            layers.append((f"env {SEED_ENV}", {"seed": int(env_seed)}))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}", code="E103")
    if config_file is not None:
        if not config_file.exists():
            raise ConfigError(f"config file not found: {config_file}", code="E104")
        data = yaml_load_if_exists(config_file) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {config_file} must hold a mapping", code="E102")
        # an echoed config.yaml nests the resolved config under 'config'
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        layers.append((str(config_file), data))
    return layers


def trace_layers(layers: List[Tuple[str, Dict[str, Any]]], quiet: bool = False) -> None:
    _print("• Config layers (least → most specific):", quiet)
    for name, data in layers:
        keys = ", ".join(sorted(data)) if name != "defaults" else "all keys"
        _print(f"   - {name}: {keys}", quiet)


def build_config(config_file: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None,
                 trace: bool = False, quiet: bool = False) -> PipelineConfig:
    layers = assemble_layers(config_file)
    if overrides:
        layers.append(("command line", overrides))
    if trace:
        trace_layers(layers, quiet=quiet)
    merged: Dict[str, Any] = {}
    for _, data in layers:
        merged = deep_merge(merged, data)
    cfg = config_from_dict(merged)

    from .linting import lint_config, raise_on_errors
    issues = lint_config(cfg)
    raise_on_errors(issues, quiet=quiet)
    return cfg


def write_config_echo(cfg: PipelineConfig, out_dir: Path, command: str, args: Dict[str, Any],
                      filename: str = "config.yaml") -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    doc = {"command": command, "args": _plain(args), "config": cfg.to_dict()}
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    return path


def config_to_yaml(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def config_from_yaml(text: str) -> PipelineConfig:
    return config_from_dict(yaml.safe_load(text) or {})
