"""Frame and AU+PS scoring on [-1, 1] pixels (peak-to-peak 2)."""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from skimage.metrics import structural_similarity

from .core import AUPSVector, FrameImage
from .errors import EmptyInputError, EvaluationError, ShapeError

PEAK_SQ = 4.0
SSIM_WINDOW = 7
INF_SENTINEL = "inf"


def _pair(a: FrameImage, b: FrameImage):
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"frame shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    return a.pixels.astype(np.float64), b.pixels.astype(np.float64)


def psnr(a: FrameImage, b: FrameImage) -> float:
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK_SQ / mse)


def ssim(a: FrameImage, b: FrameImage) -> float:
    x, y = _pair(a, b)
    if min(x.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[:2]}")
    value = structural_similarity(x, y, win_size=SSIM_WINDOW, gaussian_weights=False,
                                  data_range=2.0, channel_axis=-1)
    return float(np.clip(value, -1.0, 1.0))


def temporal_l1(pred: Sequence[FrameImage], truth: Sequence[FrameImage]) -> float:
    """Mean |(p_t - p_{t-1}) - (g_t - g_{t-1})| over the common length; 0 for a single frame."""
    n = min(len(pred), len(truth))
    if n == 0:
        raise EmptyInputError("temporal_l1 needs at least one frame")
    if n == 1:
        return 0.0
    p = np.stack([f.pixels for f in pred[:n]]).astype(np.float64)
    g = np.stack([f.pixels for f in truth[:n]]).astype(np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"frame shapes differ: {p.shape[1:]} vs {g.shape[1:]}")
    return float(np.mean(np.abs(np.diff(p, axis=0) - np.diff(g, axis=0))))


def au_mse(pred: Sequence[AUPSVector], truth: Sequence[AUPSVector]) -> float:
    """MSE in normalized units, aligned to the shorter sequence."""
    n = min(len(pred), len(truth))
    if n == 0:
        raise EvaluationError("au_mse on an empty sequence")
    if not all(v.normalized for v in list(pred[:n]) + list(truth[:n])):
        raise EvaluationError("au_mse expects normalized AU+PS vectors")
    p = np.stack([v.as_array() for v in pred[:n]])
    g = np.stack([v.as_array() for v in truth[:n]])
    return float(np.mean((p - g) ** 2))


def format_metric(value: float) -> str:
    if math.isinf(value):
        return INF_SENTINEL if value > 0 else "-" + INF_SENTINEL
    return f"{value:.6f}"


@dataclass(frozen=True)
class SampleMetrics:
    id: str
    frames_pred: int
    frames_true: int
    au_mse: float
    psnr_db: float
    ssim: float
    temporal_l1: float
    # frame pairs with infinite PSNR, left out of psnr_db
    psnr_identical: int = 0

    def as_dict(self) -> Dict[str, object]:
        return {"id": self.id, "frames_pred": self.frames_pred, "frames_true": self.frames_true,
                "au_mse": self.au_mse, "psnr_db": self.psnr_db, "psnr_identical": self.psnr_identical,
                "ssim": self.ssim, "temporal_l1": self.temporal_l1}


def score_sample(sample_id: str, pred_aups: Sequence[AUPSVector], true_aups: Sequence[AUPSVector],
                 pred_frames: Sequence[FrameImage], true_frames: Sequence[FrameImage]) -> SampleMetrics:
    n = min(len(pred_frames), len(true_frames))
    if n == 0 or not pred_aups:
        raise EvaluationError(f"sample {sample_id}: inference produced no frames")
    psnrs = [psnr(p, g) for p, g in zip(pred_frames[:n], true_frames[:n])]
    ssims = [ssim(p, g) for p, g in zip(pred_frames[:n], true_frames[:n])]
    return SampleMetrics(
        id=sample_id, frames_pred=len(pred_frames), frames_true=len(true_frames),
        au_mse=au_mse(pred_aups, true_aups), psnr_db=_mean_psnr(psnrs),
        ssim=float(np.mean(ssims)), temporal_l1=temporal_l1(pred_frames, true_frames),
        psnr_identical=sum(1 for v in psnrs if math.isinf(v)),
    )


def _mean_psnr(values: Sequence[float]) -> float:
    # identical pairs are skipped; inf only when every pair is identical
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return math.inf
    return float(np.mean(finite))


@dataclass(frozen=True)
class MetricsReport:
    au_mse: float
    psnr_db: float
    ssim: float
    temporal_l1: float
    samples: List[SampleMetrics] = field(default_factory=list)

    def as_dict(self) -> Dict[str, float]:
        return {"au_mse": self.au_mse, "psnr_db": self.psnr_db, "ssim": self.ssim, "temporal_l1": self.temporal_l1}

    @property
    def psnr_identical(self) -> int:
        return sum(s.psnr_identical for s in self.samples)


def aggregate(samples: Sequence[SampleMetrics]) -> MetricsReport:
    if not samples:
        raise EvaluationError("no samples were evaluated")
    return MetricsReport(
        au_mse=float(np.mean([s.au_mse for s in samples])),
        psnr_db=_mean_psnr([s.psnr_db for s in samples]),
        ssim=float(np.mean([s.ssim for s in samples])),
        temporal_l1=float(np.mean([s.temporal_l1 for s in samples])),
        samples=list(samples),
    )
