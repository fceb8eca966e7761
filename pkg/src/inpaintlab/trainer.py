"""Training loops: text-conditional pretraining plus inpainting finetuning
under a configurable mask policy."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace, asdict
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import text
from .core import ImageBuffer, MaskBuffer, PromptKind, RngStream
from .denoiser import (ConditioningInput, DenoiserConfig, EditDenoiser,
                       Stage, init_finetune_from, save_checkpoint)
from .diffusion import CosineSchedule
from .maskpolicy import MaskPolicyConfig, PolicyKind, draw_mask
from .scenegen import SceneSpec, make_prompts


class DivergenceError(RuntimeError):
    """Raised when the training loss goes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    policy: MaskPolicyConfig = MaskPolicyConfig()
    batch_size: int = 8
    learning_rate: float = 2e-3
    steps: int = 200
    conditioning_dropout: float = 0.1
    seed: int = 0
    stage: Stage = Stage.BASE
    warmup_steps: int = 100
    log_every: int = 20

    def __post_init__(self):
        if not 0.0 <= self.conditioning_dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def make_training_example(image: ImageBuffer, spec: SceneSpec,
                          cfg: TrainConfig, rng: RngStream):
    """(conditioning, target image) pair for one masked training sample.

    The prompt is the scene's Full caption; with probability
    conditioning_dropout the token sequence is replaced by the null
    sequence so the unconditional branch gets trained for CFG.
    """
    boxes = [o.bbox for o in spec.objects]
    mask = draw_mask((image.height, image.width), boxes, cfg.policy,
                     rng.child("mask"))
    prompt = make_prompts(spec.objects[0], spec)[PromptKind.FULL]
    tokens = text.tokenize(prompt.text)
    gen = rng.child("dropout").generator()
    if gen.uniform() < cfg.conditioning_dropout:
        tokens = text.null_sequence()
    masked = np.array(image.data)
    masked[mask.data.astype(bool)] = 0.0
    cond = ConditioningInput(ImageBuffer(masked), mask, tuple(tokens))
    return cond, image


def _stage_target(image: ImageBuffer, stage: Stage,
                  cfg: DenoiserConfig) -> torch.Tensor:
    x = torch.from_numpy(np.array(image.data)).float().permute(2, 0, 1)
    res = cfg.resolution(stage)
    if x.shape[-1] != res:
        x = F.interpolate(x[None], size=(res, res), mode="area")[0]
    return x * 2.0 - 1.0


def train(model: EditDenoiser, corpus: list, cfg: TrainConfig,
          out_dir=None, run_label: str = "run"):
    """Denoising-loss training of one cascade stage.

    `corpus` is a list of (ImageBuffer, SceneSpec) pairs. Returns
    (model, metrics list); when out_dir is given, writes a checkpoint
    whose name embeds the config hash plus a JSONL metrics log.
    """
    torch.manual_seed(cfg.seed)
    schedule = CosineSchedule()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    stream = RngStream(cfg.seed, f"train/{run_label}")
    metrics = []
    model.train()
    for step in range(cfg.steps):
        gen = stream.child(f"step/{step}").generator()
        idx = gen.integers(0, len(corpus), size=cfg.batch_size)
        x0, conds, tokens = [], [], []
        for j, i in enumerate(idx):
            image, spec = corpus[int(i)]
            cond, target = make_training_example(
                image, spec, cfg, stream.child(f"ex/{step}/{j}"))
            x0.append(_stage_target(target, model.stage, model.cfg))
            conds.append(cond.raster())
            tokens.append(list(cond.text_tokens))
        x0 = torch.stack(x0)
        cond_raster = torch.stack(conds) if model.inpainting else None
        tokens = torch.tensor(tokens)

        t = torch.from_numpy(
            gen.integers(0, schedule.timesteps, size=cfg.batch_size))
        eps = torch.randn(x0.shape)
        x_t = schedule.add_noise(x0, eps, t)
        if model.stage is Stage.SR:
            low = F.interpolate(F.interpolate(x0, scale_factor=0.25,
                                              mode="area"),
                                scale_factor=4, mode="bilinear",
                                align_corners=False)
            x_t = torch.cat([x_t, low], dim=1)

        pred = model(x_t, t, tokens, cond_raster).predicted_noise
        loss = F.mse_loss(pred, eps)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}")

        opt.zero_grad()
        loss.backward()
        lr = cfg.learning_rate * min(1.0, (step + 1) / max(1, cfg.warmup_steps))
        for group in opt.param_groups:
            group["lr"] = lr
        opt.step()

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            metrics.append({"step": step, "loss": float(loss.item()),
                            "lr": lr, "policy": cfg.policy.policy.value})
    model.eval()

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name = f"{model.stage.value}-{cfg.policy.policy.value}-{cfg.config_hash()}"
        save_checkpoint(model, out_dir / f"{name}.ckpt",
                        extra={"config_hash": cfg.config_hash(),
                               "run_label": run_label})
        with (out_dir / f"{name}.metrics.jsonl").open("w") as fh:
            for row in metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return model, metrics


def pretrain_stage(corpus: list, stage: Stage, cfg: TrainConfig,
                   denoiser_cfg: DenoiserConfig = DenoiserConfig()):
    """Text-conditional (no image/mask) stage used as the finetune base."""
    torch.manual_seed(cfg.seed)
    model = EditDenoiser(denoiser_cfg, stage, inpainting=False)
    return train(model, corpus, replace(cfg, stage=stage),
                 run_label=f"pretrain-{stage.value}")


def finetune_stage(base_model: EditDenoiser, corpus: list, cfg: TrainConfig,
                   out_dir=None):
    model = init_finetune_from(base_model, seed=cfg.seed)
    return train(model, corpus, cfg, out_dir=out_dir,
                 run_label=f"finetune-{model.stage.value}-{cfg.policy.policy.value}")


def train_pair(corpus: list, cfg: TrainConfig, base_model: EditDenoiser,
               out_dir=None):
    """Object-union and random-mask finetunes with identical budgets.

    Both runs share the seed and image stream; only the mask policy
    differs. Returns {"object_union": model, "random": model}.
    """
    cfg_union = replace(cfg, policy=replace(cfg.policy,
                                            policy=PolicyKind.OBJECT_UNION))
    cfg_random = replace(cfg, policy=replace(cfg.policy,
                                             policy=PolicyKind.RANDOM))
    union, _ = finetune_stage(base_model, corpus, cfg_union, out_dir=out_dir)
    random_, _ = finetune_stage(base_model, corpus, cfg_random, out_dir=out_dir)
    return {"object_union": union, "random": random_}


def make_corpus(n_scenes: int, rng: RngStream, canvas=(64, 64)) -> list:
    """Rendered (image, spec) training pairs over the closed vocabulary."""
    from .scenegen import category_schedule, make_scene, render_scene
    corpus = []
    for i, (attr, objcat, scene_tag) in enumerate(category_schedule(n_scenes)):
        spec, _ = make_scene(i, attr, objcat, scene_tag, rng, canvas=canvas)
        corpus.append((render_scene(spec, rng.child(f"render/{i}")), spec))
    return corpus
