"""Shared fixtures: a small denoiser configuration, a rendered toy corpus,
and quickly finetuned cascade stages reused across sampler/service tests."""

import numpy as np
import pytest

from inpaintlab.core import ImageBuffer, MaskBuffer, RngStream
from inpaintlab.denoiser import DenoiserConfig, Stage
from inpaintlab.trainer import TrainConfig, finetune_stage, make_corpus, \
    pretrain_stage

SMALL_CANVAS = (32, 32)


@pytest.fixture(scope="session")
def small_cfg():
    # The sampler composites the SR output onto the request image, so the
    # SR resolution must equal the conditioning (full image) resolution.
    return DenoiserConfig(base_resolution=8, sr_resolution=32,
                          conditioning_resolution=32, base_width=8,
                          sr_width=8, text_embed_dim=16, time_embed_dim=16)


@pytest.fixture(scope="session")
def tiny_corpus():
    return make_corpus(8, RngStream(7, "test-corpus"), canvas=SMALL_CANVAS)


@pytest.fixture(scope="session")
def toy_cascade(small_cfg, tiny_corpus):
    """Briefly finetuned (base, sr) editing stages at the small config."""
    cfg = TrainConfig(steps=5, batch_size=2, warmup_steps=2, seed=3)
    models = {}
    for stage in (Stage.BASE, Stage.SR):
        pre, _ = pretrain_stage(tiny_corpus, stage, cfg,
                                denoiser_cfg=small_cfg)
        models[stage], _ = finetune_stage(pre, tiny_corpus, cfg)
    return models[Stage.BASE], models[Stage.SR]


@pytest.fixture()
def checker_image():
    yy, xx = np.mgrid[0:32, 0:32]
    arr = np.where(((yy // 4 + xx // 4) % 2)[..., None].astype(bool),
                   0.8, 0.2)
    return ImageBuffer(np.broadcast_to(arr, (32, 32, 3)).copy())


@pytest.fixture()
def center_mask():
    m = np.zeros(SMALL_CANVAS, dtype=np.uint8)
    m[10:22, 8:24] = 1
    return MaskBuffer(m)
