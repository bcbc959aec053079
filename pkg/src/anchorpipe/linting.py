from __future__ import annotations
import re
from typing import List, Tuple

from .config import PipelineConfig
from .errors import ConfigError
from .logging import _print

Issue = Tuple[str, str, str]

KNOWN_GAN_MODES = {"vanilla", "lsgan"}
SYNTHETIC_LANDMARKS = 12
DEVICE_RE = re.compile(r"^(cpu|cuda(:\d+)?|mps)$")


def lint_config(cfg: PipelineConfig) -> List[Issue]:
    issues: List[Issue] = []
    s, g, c = cfg.seq2au, cfg.gan, cfg.corpus

    if cfg.n_prior < 0:
        issues.append(("ERROR", "E110", f"n_prior must be >= 0, got {cfg.n_prior}"))
    if cfg.t_max < 1:
        issues.append(("ERROR", "E111", f"t_max must be >= 1, got {cfg.t_max}"))
    if cfg.embed_dim < 1:
        issues.append(("ERROR", "E112", f"embed_dim must be >= 1, got {cfg.embed_dim}"))
    if len(cfg.image_hw) != 2 or min(cfg.image_hw) < 1:
        issues.append(("ERROR", "E113", f"image_hw must be two positive integers: {cfg.image_hw}"))
    else:
        h, w = cfg.image_hw
        down = 2 ** g.n_downsample
        if h % down or w % down:
            issues.append(("ERROR", "E114", f"image_hw {cfg.image_hw} not divisible by 2^n_downsample={down}"))
        scale = 2 ** max(0, g.num_scales - 1)
        if h % scale or w % scale:
            issues.append(("ERROR", "E115", f"image_hw {cfg.image_hw} not divisible by 2^(num_scales-1)={scale}"))

    for name, value in (("lambda_fm", cfg.lambda_fm), ("lambda_vgg", cfg.lambda_vgg),
                        ("seq2au.lambda_stop", s.lambda_stop)):
        if value < 0:
            issues.append(("ERROR", "E201", f"{name} must be >= 0, got {value}"))
    if any(w < 0 for w in g.perceptual_weights):
        issues.append(("ERROR", "E202", f"gan.perceptual_weights contains a negative weight: {g.perceptual_weights}"))

    if g.gan_mode not in KNOWN_GAN_MODES:
        issues.append(("ERROR", "E120", f"unknown gan_mode '{g.gan_mode}' (choose from {sorted(KNOWN_GAN_MODES)})"))
    for name, p in (("seq2au.teacher_forcing", s.teacher_forcing), ("gan.scheduled_sampling", g.scheduled_sampling)):
        if not 0.0 <= p <= 1.0:
            issues.append(("ERROR", "E121", f"{name} must lie in [0,1], got {p}"))
    for name, n in (("seq2au.batch_size", s.batch_size), ("gan.batch_size", g.batch_size),
                    ("seq2au.hidden_size", s.hidden_size), ("seq2au.num_layers", s.num_layers),
                    ("gan.num_scales", g.num_scales), ("corpus.frames_per_word", c.frames_per_word),
                    ("corpus.num_patterns", c.num_patterns), ("corpus.supersample", c.supersample),
                    ("corpus.workers", c.workers), ("fps", cfg.fps)):
        if n < 1:
            issues.append(("ERROR", "E122", f"{name} must be >= 1, got {n}"))
    for name, n in (("seq2au.steps", s.steps), ("gan.steps", g.steps)):
        if n < 0:
            issues.append(("ERROR", "E123", f"{name} must be >= 0, got {n}"))
    if g.d_layers < 2:
        issues.append(("ERROR", "E124", f"gan.d_layers must be >= 2, got {g.d_layers}"))
    if g.sigma_px <= 0:
        issues.append(("ERROR", "E125", f"gan.sigma_px must be > 0, got {g.sigma_px}"))

    if not DEVICE_RE.match(cfg.device):
        issues.append(("ERROR", "E126", f"device must be 'cpu', 'cuda', 'cuda:N' or 'mps', got {cfg.device!r}"))

    if c.landmark_count != SYNTHETIC_LANDMARKS:
        issues.append(("WARN", "W304", f"the synthetic renderer draws {SYNTHETIC_LANDMARKS} landmarks, config asks for {c.landmark_count} (only valid for external corpora)"))

    if cfg.lambda_fm == 0 and cfg.lambda_vgg == 0:
        issues.append(("WARN", "W301", "lambda_fm and lambda_vgg are both 0: generator trains on the adversarial term only"))
    if cfg.n_prior > 5:
        issues.append(("WARN", "W302", f"n_prior={cfg.n_prior} is unusually large (default window is 2)"))
    if c.supersample < 2:
        issues.append(("WARN", "W303", "corpus.supersample < 2 disables anti-aliasing"))

    lvl_order = {"ERROR": 0, "WARN": 1}
    issues.sort(key=lambda x: (lvl_order[x[0]], x[1], x[2]))
    return issues


def raise_on_errors(issues: List[Issue], quiet: bool = False) -> None:
    warns = [i for i in issues if i[0] == "WARN"]
    for _, code, msg in warns:
        _print(f" - [{code}] {msg}", quiet)
    errors = [i for i in issues if i[0] == "ERROR"]
    if errors:
        first = errors[0][1]
        raise ConfigError("; ".join(f"[{code}] {msg}" for _, code, msg in errors), code=first)
