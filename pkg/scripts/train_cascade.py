#!/usr/bin/env python3
"""Train the full editing cascade: pretrain then finetune both stages.

Writes base/sr checkpoints (pretrained and inpainting-finetuned) into
--out, ready for `inpaintlab sample` or the HTTP service.

Example:
    python3 scripts/train_cascade.py --out runs/cascade \
        --scenes 200 --pretrain-steps 400 --finetune-steps 400
"""

import argparse
from pathlib import Path

from inpaintlab.core import RngStream
from inpaintlab.denoiser import Stage, save_checkpoint
from inpaintlab.maskpolicy import MaskPolicyConfig, PolicyKind
from inpaintlab.trainer import (TrainConfig, finetune_stage, make_corpus,
                                pretrain_stage)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--scenes", type=int, default=200)
    parser.add_argument("--pretrain-steps", type=int, default=400)
    parser.add_argument("--finetune-steps", type=int, default=400)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--policy", choices=["random", "object_union"],
                        default="object_union")
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(args.scenes, RngStream(args.seed, "corpus"))
    policy = MaskPolicyConfig(policy=PolicyKind[args.policy.upper()])
    for stage in (Stage.BASE, Stage.SR):
        pre_cfg = TrainConfig(steps=args.pretrain_steps,
                              batch_size=args.batch_size, seed=args.seed,
                              stage=stage)
        model, metrics = pretrain_stage(corpus, stage, pre_cfg)
        path = args.out / f"{stage.value}-pretrain-{pre_cfg.config_hash()}.ckpt"
        save_checkpoint(model, path, extra={"loss": metrics[-1]["loss"]})
        print(f"pretrained {stage.value}: loss {metrics[-1]['loss']:.4f} "
              f"-> {path}")

        fine_cfg = TrainConfig(policy=policy, steps=args.finetune_steps,
                               batch_size=args.batch_size, seed=args.seed,
                               stage=stage)
        _, metrics = finetune_stage(model, corpus, fine_cfg,
                                    out_dir=args.out)
        print(f"finetuned {stage.value}/{args.policy}: "
              f"loss {metrics[-1]['loss']:.4f}")


if __name__ == "__main__":
    main()
