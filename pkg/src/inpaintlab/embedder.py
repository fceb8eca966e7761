"""Toy contrastive text-image embedding space.

Two interchangeable backends provide the joint latent space used by all
alignment metrics: a small conv/text encoder pair trained with a
symmetric InfoNCE objective on (image, caption) pairs, and a
deterministic oracle that embeds ground-truth labels directly (for exact
unit tests).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import text
from .core import ImageBuffer, Prompt, RngStream
from .scenegen import parse_pairs

EMBED_DIM = 64


class EmbedderStateError(RuntimeError):
    """Raised when an untrained/frozen-state contract is violated."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = EMBED_DIM
    image_size: int = 64
    batch_size: int = 32
    steps: int = 400
    learning_rate: float = 2e-3
    seed: int = 0
    logit_scale: float = 10.0


class _ImageTower(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.SiLU(),
        )
        self.head = nn.Linear(64, dim)

    def forward(self, x):
        h = self.net(x).mean(dim=(2, 3))
        return F.normalize(self.head(h), dim=-1)


class _TextTower(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.embed = nn.Embedding(text.vocab_size(), dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(),
                                 nn.Linear(dim, dim))

    def forward(self, tokens):
        mask = (tokens != text.NULL_TOKEN).float()[..., None]
        pooled = (self.embed(tokens) * mask).sum(1) / mask.sum(1).clamp(min=1)
        return F.normalize(self.mlp(pooled), dim=-1)


class ContrastiveEmbedder:
    """Trained joint text-image encoder; frozen after training."""

    def __init__(self, cfg: EmbedderConfig = EmbedderConfig()):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.image_tower = _ImageTower(cfg.dim)
        self.text_tower = _TextTower(cfg.dim)
        self.trained = False

    def _image_tensor(self, img: ImageBuffer) -> torch.Tensor:
        x = torch.from_numpy(np.array(img.data)).float().permute(2, 0, 1)
        if x.shape[-1] != self.cfg.image_size:
            x = F.interpolate(x[None], size=(self.cfg.image_size,) * 2,
                              mode="bilinear", align_corners=False)[0]
        return x * 2.0 - 1.0

    def embed_image(self, img: ImageBuffer) -> np.ndarray:
        if not self.trained:
            raise EmbedderStateError("embedder has not been trained/loaded")
        with torch.no_grad():
            v = self.image_tower(self._image_tensor(img)[None])[0]
        return v.numpy()

    def embed_text(self, prompt: Prompt) -> np.ndarray:
        if not self.trained:
            raise EmbedderStateError("embedder has not been trained/loaded")
        tokens = torch.tensor([text.tokenize(prompt.text)])
        with torch.no_grad():
            return self.text_tower(tokens)[0].numpy()

    def train_contrastive(self, pairs: list, cfg: EmbedderConfig = None):
        """Symmetric InfoNCE over in-batch negatives on (image, prompt) pairs."""
        cfg = cfg or self.cfg
        if cfg.batch_size < 2:
            raise ConfigError("contrastive training needs batch size >= 2")
        if len(pairs) < 2:
            raise ConfigError("need at least two training pairs")
        torch.manual_seed(cfg.seed)
        params = list(self.image_tower.parameters()) + \
            list(self.text_tower.parameters())
        opt = torch.optim.Adam(params, lr=cfg.learning_rate)
        stream = RngStream(cfg.seed, "embedder")
        images = torch.stack([self._image_tensor(img) for img, _ in pairs])
        tokens = torch.tensor([text.tokenize(p.text) for _, p in pairs])
        losses = []
        for step in range(cfg.steps):
            gen = stream.child(f"step/{step}").generator()
            idx = torch.from_numpy(
                gen.choice(len(pairs), size=min(cfg.batch_size, len(pairs)),
                           replace=False))
            vi = self.image_tower(images[idx])
            vt = self.text_tower(tokens[idx])
            logits = cfg.logit_scale * vi @ vt.T
            labels = torch.arange(len(idx))
            loss = 0.5 * (F.cross_entropy(logits, labels)
                          + F.cross_entropy(logits.T, labels))
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.item()))
        self.trained = True
        return losses

    def checkpoint_hash(self) -> str:
        buf = io.BytesIO()
        torch.save({"img": self.image_tower.state_dict(),
                    "txt": self.text_tower.state_dict()}, buf)
        return hashlib.sha256(buf.getvalue()).hexdigest()[:16]

    def save(self, path):
        header = json.dumps(asdict(self.cfg), sort_keys=True).encode()
        buf = io.BytesIO()
        torch.save({"img": self.image_tower.state_dict(),
                    "txt": self.text_tower.state_dict()}, buf)
        with open(path, "wb") as fh:
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            n = int.from_bytes(fh.read(8), "little")
            cfg = EmbedderConfig(**json.loads(fh.read(n)))
            state = torch.load(io.BytesIO(fh.read()), weights_only=True)
        emb = cls(cfg)
        emb.image_tower.load_state_dict(state["img"])
        emb.text_tower.load_state_dict(state["txt"])
        emb.trained = True
        return emb


class OracleEmbedder:
    """Label-derived deterministic embedder for exact tests.

    Images must come with their ground-truth pair list (supplied via
    embed_labels or recovered from a prompt); matched image/text pairs
    embed to identical unit vectors.
    """

    trained = True

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def _vector(self, key: str) -> np.ndarray:
        digest = hashlib.sha256(key.encode()).digest()
        gen = np.random.Generator(np.random.PCG64(
            int.from_bytes(digest[:8], "little")))
        v = gen.normal(size=self.dim)
        return v / np.linalg.norm(v)

    def embed_pairs(self, pairs) -> np.ndarray:
        if not pairs:
            return self._vector("<empty>")
        acc = np.sum([self._vector(
            f"{p.attribute}|{p.attribute_category.value}|{p.obj}")
            for p in pairs], axis=0)
        return acc / np.linalg.norm(acc)

    def embed_text(self, prompt: Prompt) -> np.ndarray:
        return self.embed_pairs(list(prompt.pairs) or parse_pairs(prompt))

    def embed_image(self, img: ImageBuffer, pairs=None) -> np.ndarray:
        if pairs is None:
            raise EmbedderStateError(
                "oracle embedder needs ground-truth pairs for images")
        return self.embed_pairs(pairs)

    def checkpoint_hash(self) -> str:
        return f"oracle-{self.dim}"
