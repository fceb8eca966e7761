"""Denoiser stages, conditioning channels, zero-init finetune, checkpoints.

Oracle notes:
- DERIVED: the learned-downsampler's average-pooling reference weights are
  checked against a reshape-and-mean pooling oracle; gradients of a tiny
  model are checked against float64 central differences.
- TRIVIAL: shape contracts and zero-init independence asserted directly.
"""

import numpy as np
import pytest
import torch

from inpaintlab.core import ImageBuffer, MaskBuffer, ShapeError
from inpaintlab.denoiser import (CheckpointError, ConditioningEncoder,
                                 ConditioningInput, DenoiserConfig,
                                 Downsampling, EditDenoiser, Stage,
                                 encode_conditioning, init_finetune_from,
                                 load_checkpoint, save_checkpoint)


def _cond(cfg, seed=0):
    gen = np.random.default_rng(seed)
    res = cfg.conditioning_resolution
    img = ImageBuffer(gen.uniform(size=(res, res, 3)))
    m = np.zeros((res, res), dtype=np.uint8)
    m[res // 4:res // 2, res // 4:3 * res // 4] = 1
    return ConditioningInput.create(img, MaskBuffer(m), "a red cat")


class TestConditioningInput:
    def test_create_zeroes_edit_region(self, small_cfg):
        cond = _cond(small_cfg)
        sel = cond.mask.data.astype(bool)
        assert (cond.masked_image.data[sel] == 0).all()

    def test_rejects_unzeroed_edit_region(self):
        img = ImageBuffer(np.full((8, 8, 3), 0.5))
        m = np.ones((8, 8), dtype=np.uint8)
        with pytest.raises(ShapeError):
            ConditioningInput(img, MaskBuffer(m), (0,) * 4)

    def test_raster_layout(self, small_cfg):
        cond = _cond(small_cfg)
        raster = cond.raster()
        res = small_cfg.conditioning_resolution
        assert raster.shape == (4, res, res)
        assert raster[:3].min() >= -1.0 and raster[:3].max() <= 1.0
        assert set(torch.unique(raster[3]).tolist()) <= {0.0, 1.0}


class TestConditioningEncoder:
    def test_learned_stride_shape(self, small_cfg):
        enc = ConditioningEncoder(small_cfg, Stage.BASE)
        out = enc(torch.randn(2, 4, 32, 32))
        assert out.shape == (2, 4, 8, 8)

    def test_average_pooling_reference(self, small_cfg):
        # DERIVED oracle: area pooling via reshape + mean.
        enc = ConditioningEncoder(small_cfg, Stage.BASE)
        enc.set_average_pooling()
        x = torch.randn(1, 4, 32, 32)
        got = enc(x)
        want = x.reshape(1, 4, 8, 4, 8, 4).mean(dim=(3, 5))
        assert torch.allclose(got, want, atol=1e-6)

    def test_bicubic_mode(self, small_cfg):
        from dataclasses import replace
        cfg = replace(small_cfg, downsampling=Downsampling.BICUBIC,
                      sr_resolution=16)
        enc = ConditioningEncoder(cfg, Stage.SR)
        out = enc(torch.randn(1, 4, 32, 32))
        assert out.shape == (1, 4, 16, 16)
        assert not hasattr(enc, "conv")


class TestEditDenoiser:
    def test_forward_shapes(self, small_cfg):
        torch.manual_seed(0)
        model = EditDenoiser(small_cfg, Stage.BASE)
        cond = _cond(small_cfg)
        out = model(torch.randn(2, 3, 8, 8), torch.tensor([3, 9]),
                    torch.zeros(2, 24, dtype=torch.long),
                    cond.raster()[None].expand(2, -1, -1, -1))
        assert out.predicted_noise.shape == (2, 3, 8, 8)

    def test_sr_expects_six_latent_channels(self, small_cfg):
        model = EditDenoiser(small_cfg, Stage.SR)
        assert model.latent_channels == 6
        with pytest.raises(ShapeError):
            model(torch.randn(1, 3, 16, 16), torch.tensor([0]),
                  torch.zeros(1, 24, dtype=torch.long),
                  torch.randn(1, 4, 32, 32))

    def test_missing_conditioning_rejected(self, small_cfg):
        model = EditDenoiser(small_cfg, Stage.BASE)
        with pytest.raises(ShapeError):
            model(torch.randn(1, 3, 8, 8), torch.tensor([0]),
                  torch.zeros(1, 24, dtype=torch.long), None)

    def test_pretrain_stage_has_no_conditioning(self, small_cfg):
        model = EditDenoiser(small_cfg, Stage.BASE, inpainting=False)
        out = model(torch.randn(1, 3, 8, 8), torch.tensor([0]),
                    torch.zeros(1, 24, dtype=torch.long))
        assert out.predicted_noise.shape == (1, 3, 8, 8)


class TestZeroInitFinetune:
    def test_output_ignores_conditioning_at_init(self, small_cfg):
        torch.manual_seed(1)
        base = EditDenoiser(small_cfg, Stage.BASE, inpainting=False)
        model = init_finetune_from(base)
        latent = torch.randn(1, 3, 8, 8)
        t = torch.tensor([100])
        toks = torch.zeros(1, 24, dtype=torch.long)
        with torch.no_grad():
            a = model(latent, t, toks,
                      torch.randn(1, 4, 32, 32)).predicted_noise
            b = model(latent, t, toks,
                      torch.randn(1, 4, 32, 32)).predicted_noise
            c = base(latent, t, toks).predicted_noise
        assert float((a - b).abs().max()) <= 1e-6
        assert float((a - c).abs().max()) <= 1e-6

    def test_shared_weights_copied_exactly(self, small_cfg):
        torch.manual_seed(2)
        base = EditDenoiser(small_cfg, Stage.SR, inpainting=False)
        model = init_finetune_from(base)
        bs, ms = base.state_dict(), model.state_dict()
        for name, tensor in bs.items():
            if name == "in_conv.weight":
                lc = base.latent_channels
                assert torch.equal(ms[name][:, :lc], tensor)
                assert (ms[name][:, lc:] == 0).all()
            else:
                assert torch.equal(ms[name], tensor)

    def test_rejects_inpainting_base(self, small_cfg):
        base = EditDenoiser(small_cfg, Stage.BASE, inpainting=True)
        with pytest.raises(CheckpointError):
            init_finetune_from(base)


class TestCheckpoint:
    def test_roundtrip_identical_outputs(self, small_cfg, tmp_path):
        torch.manual_seed(3)
        model = EditDenoiser(small_cfg, Stage.BASE)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, extra={"note": "x"})
        back, extra = load_checkpoint(path)
        assert extra == {"note": "x"}
        assert back.cfg == small_cfg and back.stage is Stage.BASE
        cond = _cond(small_cfg)
        latent = torch.randn(1, 3, 8, 8)
        args = (latent, torch.tensor([5]),
                torch.zeros(1, 24, dtype=torch.long), cond.raster()[None])
        with torch.no_grad():
            assert torch.equal(model(*args).predicted_noise,
                               back(*args).predicted_noise)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 32)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestEncodeConditioning:
    def test_stage_resolution_output(self, small_cfg):
        model = EditDenoiser(small_cfg, Stage.BASE)
        enc = encode_conditioning(_cond(small_cfg), Stage.BASE, model)
        assert enc.shape == (4, 8, 8)

    def test_wrong_resolution_rejected(self, small_cfg):
        model = EditDenoiser(small_cfg, Stage.BASE)
        img = ImageBuffer(np.full((16, 16, 3), 0.5))
        cond = ConditioningInput.create(
            img, MaskBuffer(np.zeros((16, 16), dtype=np.uint8)), "x")
        with pytest.raises(ShapeError):
            encode_conditioning(cond, Stage.BASE, model)


class TestGradients:
    def test_central_difference_check(self, small_cfg):
        # DERIVED oracle: float64 central differences on a random subset of
        # parameters of a tiny model.
        torch.manual_seed(4)
        model = EditDenoiser(small_cfg, Stage.BASE).double()
        latent = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        raster = torch.randn(1, 4, 32, 32, dtype=torch.float64)
        t = torch.tensor([42])
        toks = torch.zeros(1, 24, dtype=torch.long)

        def loss_value():
            return model(latent, t, toks, raster).predicted_noise.pow(2).sum()

        loss = loss_value()
        model.zero_grad()
        loss.backward()

        gen = np.random.default_rng(0)
        params = [p for p in model.parameters() if p.grad is not None]
        checked = 0
        for p in params:
            flat = p.detach().reshape(-1)
            grad = p.grad.reshape(-1)
            for idx in gen.choice(len(flat), size=min(3, len(flat)),
                                  replace=False):
                eps = 1e-6
                with torch.no_grad():
                    orig = float(flat[idx])
                    flat[idx] = orig + eps
                    up = float(loss_value())
                    flat[idx] = orig - eps
                    down = float(loss_value())
                    flat[idx] = orig
                fd = (up - down) / (2 * eps)
                denom = max(abs(fd), abs(float(grad[idx])), 1e-8)
                assert abs(fd - float(grad[idx])) / denom < 1e-3
                checked += 1
        assert checked >= 30
