"""Training loops for both stages, model (de)serialization and evaluation.

Batches are drawn from a per-epoch permutation seeded by (seed, epoch), so the batch at any
step is a pure function of the step number and a resumed run sees the same batches as an
uninterrupted one.
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .checkpoint import (RNG_KEY, Checkpoint, load_checkpoint, load_module_tensors, load_optimizer_tensors,
                         module_tensors, optimizer_tensors, restore_rng, rng_tensor, save_checkpoint)
from .cond_compiler import assemble_stack, assemble_tensor, splat_landmarks, window_indices
from .config import PipelineConfig, config_from_dict
from .core import AUPS_DIM, AUPSVector, FrameImage, LandmarkSet, SampleRecord
from .errors import DataError, EmptyInputError, EvaluationError, FormatError, ShapeError, UsageError
from .face_gan import (Generator, WindowBatch, build_discriminator, build_extractor, build_generator, gan_step,
                       generate)
from .io_corpus import Corpus
from .logging import LossLog, log_step
from .metrics import MetricsReport, SampleMetrics, aggregate, score_sample
from .seq2au import Seq2AU, build_seq2au, infer, make_optimizer, teacher_forced_outputs, train_step
from .text_frontend import EmbeddingTable, embed_text, load_table, vocabulary

SEQ2AU_KIND = "seq2au"
GAN_KIND = "gan"
LOG_EVERY = 50


def batch_indices(n: int, batch_size: int, step: int, seed: int) -> List[int]:
    per_epoch = math.ceil(n / batch_size)
    epoch, k = divmod(step, per_epoch)
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    perm = torch.randperm(n, generator=g).tolist()
    return perm[k * batch_size:(k + 1) * batch_size]


@dataclass(eq=False)
class TrainResult:
    checkpoint: Checkpoint
    path: Path
    history: List[Dict[str, float]] = field(default_factory=list)
    log_path: Optional[Path] = None


_ARCH_KEYS = {
    "seq2au": ("hidden_size", "num_layers", "finetune_embeddings"),
    "gan": ("ngf", "ndf", "n_downsample", "n_blocks", "num_scales", "d_layers", "flm_per_step"),
}


def _check_resume(ckpt: Checkpoint, cfg: PipelineConfig, section: str) -> None:
    """Architecture keys must agree; step budgets and learning rates may differ."""
    saved = config_from_dict(ckpt.config)
    pairs = [(k, getattr(saved, k), getattr(cfg, k)) for k in ("embed_dim", "n_prior", "image_hw")]
    pairs += [(f"{section}.{k}", getattr(getattr(saved, section), k), getattr(getattr(cfg, section), k))
              for k in _ARCH_KEYS[section]]
    for key, old, new in pairs:
        if old != new:
            raise FormatError(f"resume checkpoint has {key}={old}, run config has {new}")


# ---------- stage 1 ----------

def seq2au_checkpoint(model: Seq2AU, cfg: PipelineConfig, step: int, optimizer: Optional[torch.optim.Optimizer] = None,
                      rng: Optional[torch.Generator] = None) -> Checkpoint:
    tensors = module_tensors(model, "model")
    if optimizer is not None:
        tensors.update(optimizer_tensors(optimizer, model, "model"))
    if rng is not None:
        tensors[RNG_KEY] = rng_tensor(rng)
    return Checkpoint(SEQ2AU_KIND, step, cfg.to_dict(), tensors, extra={"vocab": list(model.vocab)})


@dataclass(eq=False)
class Seq2AUModel:
    model: Seq2AU
    table: EmbeddingTable
    cfg: PipelineConfig
    step: int


def seq2au_from_checkpoint(ckpt: Checkpoint, source: str = "checkpoint") -> Seq2AUModel:
    cfg = config_from_dict(ckpt.config)
    table = load_table(cfg.embeddings, cfg.embed_dim, cfg.seed)
    model = Seq2AU(cfg.embed_dim, cfg.seq2au.hidden_size, cfg.seq2au.num_layers, vocab=ckpt.extra.get("vocab") or ())
    load_module_tensors(model, ckpt.section("model"), source)
    model.eval()
    return Seq2AUModel(model.to(cfg.device), table, cfg, ckpt.step)


def load_seq2au_model(path: Path) -> Seq2AUModel:
    return seq2au_from_checkpoint(load_checkpoint(path, SEQ2AU_KIND), str(path))


def train_seq2au(corpus: Corpus, cfg: PipelineConfig, out_dir: Path, resume: Optional[Path] = None,
                 quiet: bool = False) -> TrainResult:
    records = list(corpus.records)
    if not records:
        raise EmptyInputError("training corpus has no samples")
    s = cfg.seq2au
    table = load_table(cfg.embeddings, cfg.embed_dim, cfg.seed)
    model = build_seq2au(cfg, vocabulary(corpus.texts()), table).to(cfg.device)
    optimizer = make_optimizer(model, s.lr, s.betas)
    rng = torch.Generator().manual_seed(cfg.seed)
    step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume, SEQ2AU_KIND)
        _check_resume(ckpt, cfg, "seq2au")
        load_module_tensors(model, ckpt.section("model"), str(resume))
        load_optimizer_tensors(optimizer, model, ckpt.tensors, "model")
        if RNG_KEY in ckpt.tensors:
            restore_rng(rng, ckpt.tensors[RNG_KEY])
        step = ckpt.step
        log_step("Resumed", True, f"{resume} at step {step}", quiet)

    out_dir = Path(out_dir)
    log = LossLog("seq2au", every=LOG_EVERY, quiet=quiet)
    while step < s.steps:
        batch = [records[i] for i in batch_indices(len(records), s.batch_size, step, cfg.seed)]
        report = train_step(batch, model, optimizer, table, cfg, rng)
        step += 1
        log.record(step, report.as_dict())
        if s.checkpoint_every and step % s.checkpoint_every == 0 and step < s.steps:
            save_checkpoint(seq2au_checkpoint(model, cfg, step, optimizer, rng), out_dir / f"seq2au_step{step:06d}.anch")

    final = seq2au_checkpoint(model, cfg, step, optimizer, rng)
    path = save_checkpoint(final, out_dir / "seq2au.anch")
    last = log.history[-1] if log.history else {}
    summary = ["stage=seq2au", f"steps={step}", f"samples={len(records)}", f"seed={cfg.seed}"]
    summary += [f"final_{k}={v:.6f}" for k, v in last.items()]
    log_path = log.write(out_dir, summary)
    log_step("Seq2AU trained", True, f"{step} steps → {path}", quiet)
    return TrainResult(final, path, log.history, log_path)


# ---------- stage 2 ----------

def gan_checkpoint(g: Generator, d: torch.nn.Module, cfg: PipelineConfig, step: int, avg_flm: LandmarkSet,
                   aups_source: str, opt_g: Optional[torch.optim.Optimizer] = None,
                   opt_d: Optional[torch.optim.Optimizer] = None, rng: Optional[torch.Generator] = None) -> Checkpoint:
    tensors = module_tensors(g, "g")
    tensors.update(module_tensors(d, "d"))
    if opt_g is not None:
        tensors.update(optimizer_tensors(opt_g, g, "g"))
    if opt_d is not None:
        tensors.update(optimizer_tensors(opt_d, d, "d"))
    if rng is not None:
        tensors[RNG_KEY] = rng_tensor(rng)
    extra = {"avg_flm": [list(p) for p in avg_flm.points], "aups_source": aups_source}
    return Checkpoint(GAN_KIND, step, cfg.to_dict(), tensors, extra)


@dataclass(eq=False)
class GANModel:
    generator: Generator
    cfg: PipelineConfig
    avg_flm: LandmarkSet
    step: int


def gan_from_checkpoint(ckpt: Checkpoint, source: str = "checkpoint") -> GANModel:
    cfg = config_from_dict(ckpt.config)
    g = build_generator(cfg)
    load_module_tensors(g, ckpt.section("g"), source)
    try:
        avg = LandmarkSet(tuple(tuple(p) for p in ckpt.extra["avg_flm"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{source}: average landmarks missing or invalid: {e}")
    g.eval()
    return GANModel(g.to(cfg.device), cfg, avg, ckpt.step)


def load_gan_model(path: Path) -> GANModel:
    return gan_from_checkpoint(load_checkpoint(path, GAN_KIND), str(path))


class WindowSource:
    """(sample, t) training windows with real prior frames; zero padding before frame 0."""

    def __init__(self, records: Sequence[SampleRecord], aups_rows: Sequence[torch.Tensor], avg_flm: LandmarkSet,
                 cfg: PipelineConfig):
        h, w = cfg.image_hw
        self.cfg = cfg
        self.n = cfg.n_prior
        self.heatmap = splat_landmarks(avg_flm, h, w, cfg.gan.sigma_px)
        self.aups: List[torch.Tensor] = []
        self.frames: List[torch.Tensor] = []
        for rec, rows in zip(records, aups_rows):
            if not rec.frames:
                raise DataError(f"sample {rec.id}: no frames to train on", code="E403")
            if (rec.frames[0].height, rec.frames[0].width) != (h, w):
                raise ShapeError(f"sample {rec.id}: frames are {rec.frames[0].height}x{rec.frames[0].width}, "
                                 f"config expects {h}x{w}")
            if rows.shape != (len(rec), AUPS_DIM):
                raise ShapeError(f"sample {rec.id}: AU+PS rows {tuple(rows.shape)} do not match {len(rec)} frames")
            self.aups.append(rows.to(torch.float32))
            self.frames.append(torch.as_tensor(np.stack([f.pixels for f in rec.frames])).permute(0, 3, 1, 2).contiguous())
        self.windows: List[Tuple[int, int]] = [(r, t) for r, rec in enumerate(records) for t in range(len(rec))]

    def __len__(self) -> int:
        return len(self.windows)

    def _parts(self, items: Sequence[Tuple[int, int]]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        h, w = self.cfg.image_hw
        aups, priors, current = [], [], []
        for r, t in items:
            rows, frames = self.aups[r], self.frames[r]
            idx = window_indices(t, self.n)
            aups.append(torch.stack([rows[i] if i is not None else torch.zeros(AUPS_DIM) for i in idx] + [rows[t]]))
            priors.append(torch.stack([frames[i] if i is not None else torch.zeros(3, h, w) for i in idx])
                          if self.n else torch.zeros(0, 3, h, w))
            current.append(frames[t])
        return torch.stack(aups), torch.stack(priors), torch.stack(current)

    def stacks(self, aups: torch.Tensor, priors: torch.Tensor) -> torch.Tensor:
        return assemble_tensor(aups, self.heatmap, priors, self.cfg.gan.flm_per_step)

    def batch(self, items: Sequence[Tuple[int, int]], g: Optional[Generator] = None,
              rng: Optional[torch.Generator] = None) -> WindowBatch:
        aups, real_priors, current = self._parts(items)
        stack_priors = real_priors
        p = self.cfg.gan.scheduled_sampling
        if p > 0.0 and g is not None and self.n:
            chosen = (torch.rand(len(items), generator=rng) < p).tolist()
            stack_priors = real_priors.clone()
            ref = next(g.parameters())
            with torch.no_grad():
                for b, ((r, t), take) in enumerate(zip(items, chosen)):
                    if not take:
                        continue
                    for k, i in enumerate(window_indices(t, self.n)):
                        if i is None:
                            continue
                        a_i, p_i, _ = self._parts([(r, i)])
                        fake = g(self.stacks(a_i, p_i).to(device=ref.device, dtype=ref.dtype))
                        stack_priors[b, k] = fake[0].to(stack_priors.dtype).cpu()
        return WindowBatch(self.stacks(aups, stack_priors), real_priors, current)


def _batch_to(batch: WindowBatch, device: str) -> WindowBatch:
    return WindowBatch(batch.stacks.to(device), batch.real_priors.to(device), batch.real_current.to(device))


def gan_conditioning_rows(records: Sequence[SampleRecord], seq2au: Optional[Seq2AUModel]) -> List[torch.Tensor]:
    """Ground-truth AU+PS, or the seq2au model's teacher-forced predictions aligned to them."""
    if seq2au is None:
        return [torch.as_tensor(r.aups_matrix(normalized=True), dtype=torch.float32) for r in records]
    return [teacher_forced_outputs(r, seq2au.model, seq2au.table).to(torch.float32).cpu() for r in records]


def train_gan(corpus: Corpus, cfg: PipelineConfig, out_dir: Path, seq2au: Optional[Seq2AUModel] = None,
              resume: Optional[Path] = None, quiet: bool = False) -> TrainResult:
    records = list(corpus.records)
    if not records:
        raise EmptyInputError("training corpus has no samples")
    source = WindowSource(records, gan_conditioning_rows(records, seq2au), corpus.avg_flm, cfg)
    aups_source = "gt" if seq2au is None else "seq2au"
    log_step("Windows assembled", True, f"{len(source)} windows, conditioning from {aups_source}", quiet)

    gc, device = cfg.gan, cfg.device
    g = build_generator(cfg).to(device)
    d = build_discriminator(cfg).to(device)
    extractor = build_extractor(cfg).to(device)
    opt_g = make_optimizer(g, gc.lr, gc.betas)
    opt_d = make_optimizer(d, gc.lr, gc.betas)
    rng = torch.Generator().manual_seed(cfg.seed + 3)
    step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume, GAN_KIND)
        _check_resume(ckpt, cfg, "gan")
        load_module_tensors(g, ckpt.section("g"), str(resume))
        load_module_tensors(d, ckpt.section("d"), str(resume))
        load_optimizer_tensors(opt_g, g, ckpt.tensors, "g")
        load_optimizer_tensors(opt_d, d, ckpt.tensors, "d")
        if RNG_KEY in ckpt.tensors:
            restore_rng(rng, ckpt.tensors[RNG_KEY])
        step = ckpt.step
        log_step("Resumed", True, f"{resume} at step {step}", quiet)

    out_dir = Path(out_dir)
    log = LossLog("gan", every=LOG_EVERY, quiet=quiet)
    g.train(); d.train()
    while step < gc.steps:
        items = [source.windows[i] for i in batch_indices(len(source), gc.batch_size, step, cfg.seed + 1)]
        batch = _batch_to(source.batch(items, g, rng), device)
        losses = gan_step(batch, g, d, extractor, opt_g, opt_d, cfg)
        step += 1
        log.record(step, losses.report())
        if gc.checkpoint_every and step % gc.checkpoint_every == 0 and step < gc.steps:
            ck = gan_checkpoint(g, d, cfg, step, corpus.avg_flm, aups_source, opt_g, opt_d, rng)
            save_checkpoint(ck, out_dir / f"gan_step{step:06d}.anch")

    final = gan_checkpoint(g, d, cfg, step, corpus.avg_flm, aups_source, opt_g, opt_d, rng)
    path = save_checkpoint(final, out_dir / "gan.anch")
    last = log.history[-1] if log.history else {}
    summary = ["stage=gan", f"steps={step}", f"windows={len(source)}", f"aups_source={aups_source}",
               f"lambda_fm={cfg.lambda_fm}", f"lambda_vgg={cfg.lambda_vgg}", f"seed={cfg.seed}"]
    summary += [f"final_{k}={v:.6f}" for k, v in last.items()]
    log_path = log.write(out_dir, summary)
    log_step("GAN trained", True, f"{step} steps → {path}", quiet)
    return TrainResult(final, path, log.history, log_path)


# ---------- inference + evaluation ----------

@torch.no_grad()
def rollout(aups: Sequence[AUPSVector], avg_flm: LandmarkSet, g: Generator, cfg: PipelineConfig) -> List[FrameImage]:
    """Autoregressive synthesis: every frame is conditioned on the previously generated ones."""
    frames: List[FrameImage] = []
    for t, current in enumerate(aups):
        idx = window_indices(t, cfg.n_prior)
        stack = assemble_stack(current, [aups[i] if i is not None else None for i in idx], avg_flm,
                               [frames[i] if i is not None else None for i in idx], cfg)
        frames.append(generate(stack, g))
    return frames


def predict_aups(text: str, seq2au: Seq2AUModel) -> List[AUPSVector]:
    return infer(embed_text(text, seq2au.table), seq2au.model, seq2au.cfg.t_max)


def evaluate(corpus: Corpus, seq2au: Optional[Seq2AUModel] = None, gan: Optional[GANModel] = None,
             gt_aups: bool = False, gt_frames: bool = False, quiet: bool = False) -> MetricsReport:
    """Full inference per sample; ground-truth frames are only read for scoring (or with gt_frames)."""
    if not gt_aups and seq2au is None:
        raise UsageError("evaluation needs a seq2au checkpoint unless ground-truth AU+PS are used", code="E002")
    if not gt_frames and gan is None:
        raise UsageError("evaluation needs a GAN checkpoint unless ground-truth frames are used", code="E002")
    if gan is not None and corpus.records and corpus.records[0].frames:
        f0 = corpus.records[0].frames[0]
        if (f0.height, f0.width) != tuple(gan.cfg.image_hw):
            raise EvaluationError(f"GAN checkpoint renders {tuple(gan.cfg.image_hw)} frames, "
                                  f"corpus holds {f0.height}x{f0.width}")
    samples: List[SampleMetrics] = []
    for rec in corpus.records:
        if not rec.frames:
            raise EvaluationError(f"sample {rec.id}: no ground-truth frames to score against")
        pred_aups = list(rec.aups_seq) if gt_aups else predict_aups(rec.text, seq2au)
        if not pred_aups:
            raise EvaluationError(f"sample {rec.id}: inference produced no frames")
        pred_frames = list(rec.frames) if gt_frames else rollout(pred_aups, gan.avg_flm, gan.generator, gan.cfg)
        samples.append(score_sample(rec.id, pred_aups, rec.aups_seq, pred_frames, rec.frames))
    report = aggregate(samples)
    log_step("Evaluated", True, f"{len(samples)} samples", quiet)
    return report
