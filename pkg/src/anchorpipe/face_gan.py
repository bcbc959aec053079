"""Conditional frame generator, multi-scale sequence discriminator and the combined objective.

Shrunk pix2pixHD global generator (7x7 stem, stride-2 downsampling, residual blocks,
transposed-conv upsampling, tanh head) and patch discriminators at full and half scale.
The discriminator sees the conditioning stack concatenated with an (n_prior + 1)-frame window.
"""
from __future__ import annotations
import math
from dataclasses import dataclass
from typing import List, Protocol, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .cond_compiler import ConditioningStack, channel_count, frame_tensor
from .core import FrameImage
from .errors import ConfigError, InvalidInputError, ShapeError

FeaturePyramid = List[torch.Tensor]


def init_weights(module: nn.Module, seed: int, gain: float = 0.02) -> nn.Module:
    """pix2pixHD init: conv weights ~ N(0, gain), biases 0, drawn from a seeded generator."""
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.empty(m.weight.shape, dtype=m.weight.dtype).normal_(0.0, gain, generator=g))
                if m.bias is not None:
                    m.bias.zero_()
    return module


class ResnetBlock(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(dim, dim, 3), nn.InstanceNorm2d(dim), nn.ReLU(True),
            nn.ReflectionPad2d(1), nn.Conv2d(dim, dim, 3), nn.InstanceNorm2d(dim),
        )

    def forward(self, x):
        return x + self.block(x)


class Generator(nn.Module):
    def __init__(self, in_channels: int, ngf: int = 32, n_downsample: int = 2, n_blocks: int = 4):
        super().__init__()
        self.in_channels = in_channels
        layers: List[nn.Module] = [nn.ReflectionPad2d(3), nn.Conv2d(in_channels, ngf, 7),
                                   nn.InstanceNorm2d(ngf), nn.ReLU(True)]
        for i in range(n_downsample):
            mult = 2 ** i
            layers += [nn.Conv2d(ngf * mult, ngf * mult * 2, 3, stride=2, padding=1),
                       nn.InstanceNorm2d(ngf * mult * 2), nn.ReLU(True)]
        mult = 2 ** n_downsample
        layers += [ResnetBlock(ngf * mult) for _ in range(n_blocks)]
        for i in range(n_downsample):
            mult = 2 ** (n_downsample - i)
            layers += [nn.ConvTranspose2d(ngf * mult, ngf * mult // 2, 3, stride=2, padding=1, output_padding=1),
                       nn.InstanceNorm2d(ngf * mult // 2), nn.ReLU(True)]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(ngf, 3, 7), nn.Tanh()]
        self.model = nn.Sequential(*layers)

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        if stack.dim() != 4 or stack.shape[1] != self.in_channels:
            raise ShapeError(f"generator expects (B, {self.in_channels}, H, W), got {tuple(stack.shape)}")
        return self.model(stack)


class PatchDiscriminator(nn.Module):
    def __init__(self, in_channels: int, ndf: int = 32, n_layers: int = 4):
        super().__init__()
        kw, padw = 4, int(math.ceil((4 - 1) / 2))
        blocks: List[nn.Module] = [nn.Sequential(nn.Conv2d(in_channels, ndf, kw, stride=2, padding=padw),
                                                 nn.LeakyReLU(0.2, True))]
        nf = ndf
        for i in range(1, n_layers - 1):
            prev, nf = nf, min(nf * 2, 512)
            stride = 2 if i < n_layers - 2 else 1
            blocks.append(nn.Sequential(nn.Conv2d(prev, nf, kw, stride=stride, padding=padw),
                                        nn.InstanceNorm2d(nf), nn.LeakyReLU(0.2, True)))
        blocks.append(nn.Sequential(nn.Conv2d(nf, 1, kw, stride=1, padding=padw)))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, FeaturePyramid]:
        feats: FeaturePyramid = []
        for block in self.blocks[:-1]:
            x = block(x)
            feats.append(x)
        return self.blocks[-1](x), feats


class MultiscaleDiscriminator(nn.Module):
    def __init__(self, in_channels: int, ndf: int = 32, n_layers: int = 4, num_scales: int = 2):
        super().__init__()
        self.in_channels = in_channels
        self.scales = nn.ModuleList(PatchDiscriminator(in_channels, ndf, n_layers) for _ in range(num_scales))
        self.downsample = nn.AvgPool2d(2)

    def forward(self, x: torch.Tensor) -> "DiscriminatorOutput":
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"discriminator expects (B, {self.in_channels}, H, W), got {tuple(x.shape)}")
        logits, feats, inputs = [], [], []
        for i, scale in enumerate(self.scales):
            if i:
                x = self.downsample(x)
            inputs.append(x)
            out, pyramid = scale(x)
            logits.append(out); feats.append(pyramid)
        return DiscriminatorOutput(logits, feats, inputs)


@dataclass(eq=False)
class DiscriminatorOutput:
    logits: List[torch.Tensor]
    features: List[FeaturePyramid]
    inputs: List[torch.Tensor]


def build_generator(cfg) -> Generator:
    g = Generator(channel_count(cfg.n_prior, cfg.gan.flm_per_step), cfg.gan.ngf, cfg.gan.n_downsample, cfg.gan.n_blocks)
    return init_weights(g, cfg.seed)


def build_discriminator(cfg) -> MultiscaleDiscriminator:
    c = channel_count(cfg.n_prior, cfg.gan.flm_per_step) + 3 * (cfg.n_prior + 1)
    d = MultiscaleDiscriminator(c, cfg.gan.ndf, cfg.gan.d_layers, cfg.gan.num_scales)
    return init_weights(d, cfg.seed + 1)


# ---------- forward operations ----------

def _stack_batch(stack: ConditioningStack | torch.Tensor) -> torch.Tensor:
    t = stack.channels if isinstance(stack, ConditioningStack) else stack
    return t.unsqueeze(0) if t.dim() == 3 else t


@torch.no_grad()
def generate(stack: ConditioningStack | torch.Tensor, g: Generator) -> FrameImage:
    ref = next(g.parameters())
    x = _stack_batch(stack).to(device=ref.device, dtype=ref.dtype)
    if x.shape[1] != g.in_channels:
        raise ShapeError(f"stack has {x.shape[1]} channels, generator expects {g.in_channels}")
    out = g(x)[0]
    return FrameImage(out.permute(1, 2, 0).float().cpu().numpy())


def window_tensor(frames: Sequence[FrameImage] | torch.Tensor) -> torch.Tensor:
    if isinstance(frames, torch.Tensor):
        return frames.unsqueeze(0) if frames.dim() == 4 else frames
    return torch.stack([frame_tensor(f) for f in frames]).unsqueeze(0)


def discriminate(stack: ConditioningStack | torch.Tensor, frame_window: Sequence[FrameImage] | torch.Tensor,
                 d: MultiscaleDiscriminator, n_prior: int) -> DiscriminatorOutput:
    x = _stack_batch(stack)
    window = window_tensor(frame_window).to(x.dtype)
    if window.shape[1] != n_prior + 1:
        raise ShapeError(f"frame window has {window.shape[1]} frames, expected n_prior+1 = {n_prior + 1}")
    b, _, h, w = x.shape
    return d(torch.cat([x, window.reshape(b, -1, h, w)], dim=1))


# ---------- losses ----------

def _check_finite(logits: Sequence[torch.Tensor], what: str) -> None:
    for t in logits:
        if torch.isnan(t).any():
            raise InvalidInputError(f"NaN in {what} logits")


def gan_loss(real_logits: Sequence[torch.Tensor], fake_logits: Sequence[torch.Tensor],
             mode: str = "vanilla") -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-scale losses summed over scales. Vanilla uses the logit form: -log σ(x) = softplus(-x)."""
    _check_finite(real_logits, "real"); _check_finite(fake_logits, "fake")
    if len(real_logits) != len(fake_logits):
        raise ShapeError(f"{len(real_logits)} real scales vs {len(fake_logits)} fake scales")
    d_loss = real_logits[0].new_zeros(())
    g_loss = real_logits[0].new_zeros(())
    for real, fake in zip(real_logits, fake_logits):
        if mode == "lsgan":
            d_loss = d_loss + ((real - 1) ** 2).mean() + (fake ** 2).mean()
            g_loss = g_loss + ((fake - 1) ** 2).mean()
        else:
            d_loss = d_loss + F.softplus(-real).mean() + F.softplus(fake).mean()
            g_loss = g_loss + F.softplus(-fake).mean()
    return d_loss, g_loss


def generator_adv_loss(fake_logits: Sequence[torch.Tensor], mode: str = "vanilla") -> torch.Tensor:
    _check_finite(fake_logits, "fake")
    total = fake_logits[0].new_zeros(())
    for fake in fake_logits:
        total = total + (((fake - 1) ** 2).mean() if mode == "lsgan" else F.softplus(-fake).mean())
    return total


def fm_loss(real_feats: Sequence[FeaturePyramid], fake_feats: Sequence[FeaturePyramid]) -> torch.Tensor:
    if len(real_feats) != len(fake_feats):
        raise ShapeError(f"{len(real_feats)} real pyramids vs {len(fake_feats)} fake pyramids")
    terms = []
    for s, (rp, fp) in enumerate(zip(real_feats, fake_feats)):
        if len(rp) != len(fp):
            raise ShapeError(f"scale {s}: {len(rp)} real layers vs {len(fp)} fake layers")
        for l, (r, f) in enumerate(zip(rp, fp)):
            if r.shape != f.shape:
                raise ShapeError(f"scale {s} layer {l}: {tuple(r.shape)} vs {tuple(f.shape)}")
            terms.append((r.detach() - f).abs().mean())
    if not terms:
        raise ShapeError("feature pyramids are empty")
    return torch.stack(terms).mean()


class FeatureExtractor(Protocol):
    weights: Sequence[float]

    def __call__(self, x: torch.Tensor) -> List[torch.Tensor]: ...


class FrozenConvExtractor(nn.Module):
    """Fixed random conv pyramid standing in for pretrained perceptual features."""

    def __init__(self, seed: int = 0, widths: Sequence[int] = (16, 32, 64),
                 weights: Sequence[float] = (0.25, 0.5, 1.0)):
        super().__init__()
        if len(widths) != len(weights):
            raise ConfigError(f"{len(widths)} extractor layers but {len(weights)} layer weights")
        self.weights = tuple(float(w) for w in weights)
        layers, prev = [], 3
        for i, width in enumerate(widths):
            layers.append(nn.Sequential(nn.Conv2d(prev, width, 3, stride=1 if i == 0 else 2, padding=1),
                                        nn.LeakyReLU(0.2)))
            prev = width
        self.layers = nn.ModuleList(layers)
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for layer in self.layers:
                conv = layer[0]
                std = math.sqrt(2.0 / (conv.in_channels * 9))
                conv.weight.copy_(torch.empty(conv.weight.shape).normal_(0.0, std, generator=g))
                conv.bias.zero_()
        self.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        feats = []
        for layer in self.layers:
            x = layer(x)
            feats.append(x)
        return feats


class IdentityExtractor(nn.Module):
    weights = (1.0,)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        return [x]


def _image_batch(x: FrameImage | torch.Tensor) -> torch.Tensor:
    if isinstance(x, FrameImage):
        return frame_tensor(x).unsqueeze(0)
    return x.unsqueeze(0) if x.dim() == 3 else x


def perceptual_loss(fake: FrameImage | torch.Tensor, real: FrameImage | torch.Tensor,
                    extractor: FeatureExtractor) -> torch.Tensor:
    a, b = _image_batch(fake), _image_batch(real)
    if a.shape != b.shape:
        raise ShapeError(f"perceptual loss on {tuple(a.shape)} vs {tuple(b.shape)}")
    fa, fb = extractor(a), extractor(b.to(a.dtype))
    total = a.new_zeros(())
    for w, x, y in zip(extractor.weights, fa, fb):
        total = total + w * (x - y.detach()).abs().mean()
    return total


@dataclass(eq=False)
class WindowBatch:
    stacks: torch.Tensor        # (B, C, H, W)
    real_priors: torch.Tensor   # (B, n, 3, H, W)
    real_current: torch.Tensor  # (B, 3, H, W)


@dataclass(eq=False)
class GANLosses:
    g_total: torch.Tensor
    d_total: torch.Tensor
    d_loss: torch.Tensor
    g_adv: torch.Tensor
    g_fm: torch.Tensor
    g_perc: torch.Tensor
    fake: torch.Tensor

    def report(self) -> dict:
        return {"d_loss": float(self.d_loss.detach()), "g_adv": float(self.g_adv.detach()),
                "g_fm": float(self.g_fm.detach()), "g_perc": float(self.g_perc.detach())}


def _window(priors: torch.Tensor, current: torch.Tensor) -> torch.Tensor:
    return torch.cat([priors, current.unsqueeze(1)], dim=1)


def combined_losses(batch: WindowBatch, g: Generator, d: MultiscaleDiscriminator, extractor: FeatureExtractor,
                    lambda_fm: float, lambda_vgg: float, gan_mode: str = "vanilla") -> GANLosses:
    """Fake window = the n real prior frames + the generated current frame."""
    if lambda_fm < 0 or lambda_vgg < 0:
        raise ConfigError(f"loss weights must be >= 0, got lambda_fm={lambda_fm}, lambda_vgg={lambda_vgg}", code="E201")
    n_prior = batch.real_priors.shape[1]
    fake = g(batch.stacks)

    real_out = discriminate(batch.stacks, _window(batch.real_priors, batch.real_current), d, n_prior)
    fake_out_d = discriminate(batch.stacks, _window(batch.real_priors, fake.detach()), d, n_prior)
    d_loss, _ = gan_loss(real_out.logits, fake_out_d.logits, gan_mode)

    fake_out_g = discriminate(batch.stacks, _window(batch.real_priors, fake), d, n_prior)
    g_adv = generator_adv_loss(fake_out_g.logits, gan_mode)
    g_fm = fm_loss(real_out.features, fake_out_g.features)
    g_perc = perceptual_loss(fake, batch.real_current, extractor)
    g_total = g_adv + lambda_fm * g_fm + lambda_vgg * g_perc
    return GANLosses(g_total, d_loss, d_loss, g_adv, g_fm, g_perc, fake)


def gan_step(batch: WindowBatch, g: Generator, d: MultiscaleDiscriminator, extractor: FeatureExtractor,
             opt_g: torch.optim.Optimizer, opt_d: torch.optim.Optimizer, cfg) -> GANLosses:
    """G update, then D update on the same batch."""
    losses = combined_losses(batch, g, d, extractor, cfg.lambda_fm, cfg.lambda_vgg, cfg.gan.gan_mode)
    opt_g.zero_grad(set_to_none=True)
    losses.g_total.backward()
    opt_g.step()
    opt_d.zero_grad(set_to_none=True)
    losses.d_total.backward()
    opt_d.step()
    return losses


def build_extractor(cfg) -> FrozenConvExtractor:
    return FrozenConvExtractor(seed=cfg.seed + 2, weights=cfg.gan.perceptual_weights,
                               widths=tuple(16 * 2 ** i for i in range(len(cfg.gan.perceptual_weights))))
