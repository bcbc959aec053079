from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .core import AUPSVector, FrameImage
from .errors import EvaluationError
from .io_corpus import write_aups_csv, write_frames, write_gif
from .logging import log_step
from .train_eval import GANModel, Seq2AUModel, predict_aups, rollout


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    text: str
    aups: List[AUPSVector]
    frames: List[FrameImage]


def synthesize(text: str, seq2au: Seq2AUModel, gan: GANModel, quiet: bool = False) -> SynthesisResult:
    """Text → AU+PS sequence → frames, each frame fed back as a prior for the next."""
    aups = predict_aups(text, seq2au)
    if not aups:
        raise EvaluationError(f"no frames predicted for {text!r}")
    log_step("A. AU+PS predicted", True, f"{len(aups)} frames", quiet)
    frames = rollout(aups, gan.avg_flm, gan.generator, gan.cfg)
    log_step("B. Frames synthesized", True, f"{len(frames)} × {gan.cfg.image_hw[0]}x{gan.cfg.image_hw[1]}", quiet)
    return SynthesisResult(text, aups, frames)


def write_synthesis(result: SynthesisResult, out_dir: Path, gif: bool = False, fps: int = 12,
                    quiet: bool = False) -> List[Path]:
    out_dir = Path(out_dir)
    paths = write_frames(out_dir / "frames", result.frames)
    paths.append(write_aups_csv(out_dir / "aups.csv", result.aups))
    if gif:
        paths.append(write_gif(out_dir / "synth.gif", result.frames, fps))
    log_step("C. Output written", True, str(out_dir), quiet)
    return paths


def run_synthesis(text: str, seq2au: Seq2AUModel, gan: GANModel, out_dir: Path, gif: bool = False,
                  fps: Optional[int] = None, quiet: bool = False) -> SynthesisResult:
    result = synthesize(text, seq2au, gan, quiet=quiet)
    write_synthesis(result, out_dir, gif=gif, fps=fps or gan.cfg.fps, quiet=quiet)
    return result
