"""Toy cascaded inpainting denoisers.

Two UNet-style stages (base 16x16, super-resolution 16->64) that condition
on a masked image plus mask raster concatenated to the diffusion latents
along channels. The conditioning raster always lives at a fixed high
resolution and is brought to each stage's latent resolution by a strided
learned convolution (or bicubic resampling). Finetune initialization
zeroes the new conditioning input channels so the edit model initially
reproduces the pretrained stage exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import text
from .core import ImageBuffer, MaskBuffer, ShapeError


class Stage(str, Enum):
    BASE = "base"
    SR = "sr"


class Downsampling(str, Enum):
    LEARNED_CONV = "LearnedConv"
    BICUBIC = "Bicubic"


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class DenoiserConfig:
    base_resolution: int = 16
    sr_resolution: int = 64
    conditioning_resolution: int = 64
    base_width: int = 32
    sr_width: int = 24
    text_embed_dim: int = 32
    time_embed_dim: int = 32
    downsampling: Downsampling = Downsampling.LEARNED_CONV
    token_length: int = text.MAX_TOKENS
    vocab_size: int = text.vocab_size()

    def resolution(self, stage: Stage) -> int:
        return self.base_resolution if stage is Stage.BASE else self.sr_resolution

    def stride(self, stage: Stage) -> int:
        res = self.resolution(stage)
        if self.conditioning_resolution % res != 0:
            raise ConfigError(
                f"conditioning {self.conditioning_resolution} not an integer "
                f"multiple of stage resolution {res}")
        return self.conditioning_resolution // res

    def width(self, stage: Stage) -> int:
        return self.base_width if stage is Stage.BASE else self.sr_width


@dataclass(frozen=True)
class ConditioningInput:
    """Masked image (edit region zeroed), mask, and prompt token ids."""

    masked_image: ImageBuffer
    mask: MaskBuffer
    text_tokens: tuple

    def __post_init__(self):
        if self.mask.data.shape != self.masked_image.data.shape[:2]:
            raise ShapeError("mask / image shape mismatch")
        sel = self.mask.data.astype(bool)
        if sel.any() and float(np.abs(self.masked_image.data[sel]).max()) > 0:
            raise ShapeError("edit-region pixels must be zeroed")
        object.__setattr__(self, "text_tokens", tuple(self.text_tokens))

    @classmethod
    def create(cls, image: ImageBuffer, mask: MaskBuffer, prompt_text: str,
               token_length: int = text.MAX_TOKENS):
        masked = np.array(image.data)
        masked[mask.data.astype(bool)] = 0.0
        return cls(ImageBuffer(masked), mask,
                   tuple(text.tokenize(prompt_text, token_length)))

    def raster(self) -> torch.Tensor:
        """4-channel [-1,1] image + {0,1} mask tensor, CHW."""
        img = torch.from_numpy(np.array(self.masked_image.data)).float() * 2.0 - 1.0
        mask = torch.from_numpy(np.array(self.mask.data)).float()
        return torch.cat([img.permute(2, 0, 1), mask[None]], dim=0)


@dataclass(frozen=True)
class DenoiserOutput:
    predicted_noise: torch.Tensor


def _timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freq = torch.exp(-np.log(10000.0) *
                     torch.arange(half, dtype=t.dtype, device=t.device) / half)
    ang = t[:, None].float() * freq[None]
    return torch.cat([ang.sin(), ang.cos()], dim=1)


class CrossAttention(nn.Module):
    """Single-head cross-attention from feature-map pixels to text tokens."""

    def __init__(self, channels: int, text_dim: int):
        super().__init__()
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(text_dim, channels)
        self.v = nn.Linear(text_dim, channels)
        self.out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q = self.q(x.flatten(2).transpose(1, 2))
        k = self.k(tokens)
        v = self.v(tokens)
        att = torch.softmax(q @ k.transpose(1, 2) / np.sqrt(c), dim=-1)
        y = self.out(att @ v).transpose(1, 2).reshape(b, c, h, w)
        return x + y


class ConditioningEncoder(nn.Module):
    """Brings the 4-channel conditioning raster to the stage resolution."""

    def __init__(self, cfg: DenoiserConfig, stage: Stage):
        super().__init__()
        self.mode = cfg.downsampling
        self.stride = cfg.stride(stage)
        if self.mode is Downsampling.LEARNED_CONV:
            self.conv = nn.Conv2d(4, 4, kernel_size=max(1, self.stride),
                                  stride=self.stride, bias=False)

    def forward(self, cond: torch.Tensor) -> torch.Tensor:
        if self.mode is Downsampling.LEARNED_CONV:
            return self.conv(cond)
        if self.stride == 1:
            return cond
        return F.interpolate(cond, scale_factor=1.0 / self.stride,
                             mode="bicubic", align_corners=False,
                             antialias=False)

    def set_average_pooling(self):
        """Load area-averaging weights; used by tests as a reference point."""
        with torch.no_grad():
            w = torch.zeros_like(self.conv.weight)
            for c in range(4):
                w[c, c] = 1.0 / (self.stride * self.stride)
            self.conv.weight.copy_(w)


class _Block(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.temb = nn.Linear(time_dim, c_out)

    def forward(self, x, temb):
        h = F.silu(self.conv1(x))
        h = h + self.temb(temb)[:, :, None, None]
        return F.silu(self.conv2(h))


class EditDenoiser(nn.Module):
    """One cascade stage predicting the added noise.

    With inpainting=False the network is the pretrained stage: no
    conditioning raster input (the SR stage still sees the upsampled
    low-resolution sample). With inpainting=True the conditioning raster
    is encoded and concatenated to the latent channels.
    """

    def __init__(self, cfg: DenoiserConfig, stage: Stage,
                 inpainting: bool = True):
        super().__init__()
        self.cfg = cfg
        self.stage = Stage(stage)
        self.inpainting = inpainting
        w = cfg.width(stage)
        latent_c = 3 + (3 if self.stage is Stage.SR else 0)
        in_c = latent_c + (4 if inpainting else 0)
        self.latent_channels = latent_c
        if inpainting:
            self.cond_encoder = ConditioningEncoder(cfg, self.stage)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_embed_dim, cfg.time_embed_dim), nn.SiLU(),
            nn.Linear(cfg.time_embed_dim, cfg.time_embed_dim))
        self.token_embed = nn.Embedding(cfg.vocab_size, cfg.text_embed_dim)
        self.in_conv = nn.Conv2d(in_c, w, 3, padding=1)
        self.down = _Block(w, 2 * w, cfg.time_embed_dim)
        self.pool = nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1)
        self.mid = _Block(2 * w, 2 * w, cfg.time_embed_dim)
        self.attn = CrossAttention(2 * w, cfg.text_embed_dim)
        self.up = nn.ConvTranspose2d(2 * w, w, 4, stride=2, padding=1)
        self.out_block = _Block(2 * w, w, cfg.time_embed_dim)
        self.out_conv = nn.Conv2d(w, 3, 3, padding=1)

    def forward(self, latent: torch.Tensor, t: torch.Tensor,
                tokens: torch.Tensor,
                cond_raster: torch.Tensor | None = None) -> DenoiserOutput:
        res = self.cfg.resolution(self.stage)
        if latent.shape[-1] != res or latent.shape[1] != self.latent_channels:
            raise ShapeError(f"latent shape {tuple(latent.shape)} invalid "
                             f"for stage {self.stage.value}")
        x = latent
        if self.inpainting:
            if cond_raster is None:
                raise ShapeError("inpainting stage requires conditioning")
            enc = self.cond_encoder(cond_raster)
            x = torch.cat([x, enc], dim=1)
        temb = self.time_mlp(_timestep_embedding(t, self.cfg.time_embed_dim)
                             .to(latent.dtype))
        tok = self.token_embed(tokens).to(latent.dtype)
        h0 = F.silu(self.in_conv(x))
        h1 = self.down(h0, temb)
        h2 = self.mid(self.pool(h1), temb)
        h2 = self.attn(h2, tok)
        h3 = self.up(h2)
        h3 = self.out_block(torch.cat([h3, h0], dim=1), temb)
        return DenoiserOutput(self.out_conv(h3))


def encode_conditioning(cond: ConditioningInput, stage: Stage,
                        model: EditDenoiser) -> torch.Tensor:
    """Stage-resolution 4-channel encoding of a conditioning input."""
    raster = cond.raster()[None].to(next(model.parameters()).dtype)
    if raster.shape[-1] != model.cfg.conditioning_resolution:
        raise ShapeError("conditioning raster at wrong resolution")
    with torch.no_grad():
        return model.cond_encoder(raster)[0]


def init_finetune_from(base_model: EditDenoiser, cfg: DenoiserConfig = None,
                       seed: int = 0) -> EditDenoiser:
    """Editing stage initialized from a pretrained stage checkpoint.

    All shared weights are copied exactly; the input-convolution slices
    covering the new conditioning channels are zeroed, so the finetuned
    model's output initially ignores the image and mask.
    """
    if base_model.inpainting:
        raise CheckpointError("base checkpoint already has conditioning channels")
    cfg = cfg or base_model.cfg
    torch.manual_seed(seed)
    model = EditDenoiser(cfg, base_model.stage, inpainting=True)
    base_state = base_model.state_dict()
    state = model.state_dict()
    for name, tensor in base_state.items():
        if name == "in_conv.weight":
            continue
        if state[name].shape != tensor.shape:
            raise CheckpointError(f"architecture mismatch at {name}")
        state[name] = tensor.clone()
    w = torch.zeros_like(state["in_conv.weight"])
    lc = base_model.latent_channels
    w[:, :lc] = base_state["in_conv.weight"]
    state["in_conv.weight"] = w
    model.load_state_dict(state)
    return model


# --- checkpoint format -----------------------------------------------------

MAGIC = b"IPLCKPT1"


def save_checkpoint(model: EditDenoiser, path, extra: dict = None) -> None:
    header = {
        "config": {k: (v.value if isinstance(v, Enum) else v)
                   for k, v in asdict(model.cfg).items()},
        "stage": model.stage.value,
        "inpainting": model.inpainting,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError("bad checkpoint magic")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n))
        state = torch.load(io.BytesIO(fh.read()), weights_only=True)
    raw = dict(header["config"])
    raw["downsampling"] = Downsampling(raw["downsampling"])
    cfg = DenoiserConfig(**raw)
    model = EditDenoiser(cfg, Stage(header["stage"]),
                         inpainting=header["inpainting"])
    model.load_state_dict(state)
    model.eval()
    return model, header["extra"]
