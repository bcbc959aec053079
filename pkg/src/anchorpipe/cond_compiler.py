"""Generator input: AU+PS broadcast maps, average-landmark heatmap, prior frames.

Channel order for window n:
    [AU+PS t-n ... AU+PS t-1, AU+PS t] (20 each), avg-FLM heatmap (1, or n+1 with flm_per_step),
    [frame t-n ... frame t-1] (3 each).
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch

from .core import AUPS_DIM, AUPSVector, FrameImage, LandmarkSet
from .errors import ContractError, ShapeError


def channel_count(n_prior: int, flm_per_step: bool = False) -> int:
    flm = n_prior + 1 if flm_per_step else 1
    return AUPS_DIM * (n_prior + 1) + flm + 3 * n_prior


@dataclass(frozen=True)
class ChannelGroup:
    name: str
    start: int
    stop: int


def stack_layout(n_prior: int, flm_per_step: bool = False) -> Tuple[ChannelGroup, ...]:
    groups: List[ChannelGroup] = []
    c = 0
    for k in range(n_prior, -1, -1):
        groups.append(ChannelGroup(f"aups[t-{k}]" if k else "aups[t]", c, c + AUPS_DIM)); c += AUPS_DIM
    flm = n_prior + 1 if flm_per_step else 1
    groups.append(ChannelGroup("flm", c, c + flm)); c += flm
    for k in range(n_prior, 0, -1):
        groups.append(ChannelGroup(f"frame[t-{k}]", c, c + 3)); c += 3
    return tuple(groups)


@dataclass(frozen=True, eq=False)
class ConditioningStack:
    channels: torch.Tensor
    layout: Tuple[ChannelGroup, ...]

    def group(self, name: str) -> torch.Tensor:
        for g in self.layout:
            if g.name == name:
                return self.channels[g.start:g.stop]
        raise KeyError(name)

    @property
    def num_channels(self) -> int:
        return int(self.channels.shape[0])


def _aups_tensor(v: AUPSVector, dtype=torch.float32) -> torch.Tensor:
    if not v.normalized:
        raise ContractError("conditioning needs normalized AU+PS vectors")
    return torch.as_tensor(v.as_array(), dtype=dtype)


def frame_tensor(frame: FrameImage, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(frame.pixels, dtype=dtype).permute(2, 0, 1).contiguous()


def broadcast_aups(v: AUPSVector, height: int, width: int) -> torch.Tensor:
    return broadcast_tensor(_aups_tensor(v).unsqueeze(0), height, width)[0]


def broadcast_tensor(aups: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """(B, K) → (B, K, H, W), each channel constant."""
    return aups[:, :, None, None].expand(-1, -1, height, width)


def splat_landmarks(flm: LandmarkSet, height: int, width: int, sigma_px: float) -> torch.Tensor:
    """Max-combined Gaussian bumps; landmark (x, y) sits at pixel (x*(W-1), y*(H-1))."""
    pts = torch.as_tensor(flm.as_array(), dtype=torch.float64)
    ys = torch.arange(height, dtype=torch.float64).view(1, -1, 1)
    xs = torch.arange(width, dtype=torch.float64).view(1, 1, -1)
    px = (pts[:, 0] * (width - 1)).view(-1, 1, 1)
    py = (pts[:, 1] * (height - 1)).view(-1, 1, 1)
    d2 = (xs - px) ** 2 + (ys - py) ** 2
    heat = torch.exp(-d2 / (2.0 * sigma_px ** 2)).amax(dim=0)
    # far pixels underflow to 0; keep the map strictly positive
    heat = heat.clamp_min(torch.finfo(torch.float32).tiny)
    return heat.to(torch.float32).unsqueeze(0)


def assemble_tensor(aups: torch.Tensor, heatmap: torch.Tensor, prior_frames: torch.Tensor,
                    flm_per_step: bool = False) -> torch.Tensor:
    """Batched assembly.

    aups: (B, n+1, 20) oldest first, current last; heatmap: (1, H, W); prior_frames: (B, n, 3, H, W).
    """
    b, window, dim = aups.shape
    n = window - 1
    if dim != AUPS_DIM or prior_frames.shape[:2] != (b, n) or prior_frames.shape[2] != 3:
        raise ShapeError(f"window mismatch: aups {tuple(aups.shape)}, prior frames {tuple(prior_frames.shape)}")
    h, w = heatmap.shape[-2:]
    parts = [broadcast_tensor(aups.reshape(b, window * AUPS_DIM), h, w)]
    heat = heatmap.to(aups.dtype).reshape(1, 1, h, w).expand(b, window if flm_per_step else 1, h, w)
    parts.append(heat)
    if n:
        parts.append(prior_frames.reshape(b, n * 3, h, w).to(aups.dtype))
    return torch.cat(parts, dim=1)


def assemble_stack(current: AUPSVector, priors: Sequence[Optional[AUPSVector]], avg_flm: LandmarkSet,
                   prior_frames: Sequence[Optional[FrameImage]], config) -> ConditioningStack:
    """Priors are ordered oldest first; ``None`` marks a slot before the sequence start (zero-filled)."""
    n = config.n_prior
    if len(priors) != n or len(prior_frames) != n:
        raise ShapeError(f"expected {n} priors and {n} prior frames, got {len(priors)} and {len(prior_frames)}")
    h, w = config.image_hw
    rows = [_aups_tensor(v) if v is not None else torch.zeros(AUPS_DIM) for v in priors]
    rows.append(_aups_tensor(current))
    frames = []
    for f in prior_frames:
        if f is None:
            frames.append(torch.zeros(3, h, w))
        elif (f.height, f.width) != (h, w):
            raise ShapeError(f"prior frame is {f.height}x{f.width}, config expects {h}x{w}")
        else:
            frames.append(frame_tensor(f))
    prior_t = torch.stack(frames).unsqueeze(0) if frames else torch.zeros(1, 0, 3, h, w)
    heat = splat_landmarks(avg_flm, h, w, config.gan.sigma_px)
    flm_per_step = config.gan.flm_per_step
    channels = assemble_tensor(torch.stack(rows).unsqueeze(0), heat, prior_t, flm_per_step)[0]
    return ConditioningStack(channels, stack_layout(n, flm_per_step))


def window_indices(t: int, n_prior: int) -> List[Optional[int]]:
    """Frame indices t-n .. t-1, ``None`` before the sequence start."""
    return [i if i >= 0 else None for i in range(t - n_prior, t)]
