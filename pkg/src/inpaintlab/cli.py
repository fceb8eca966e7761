"""Command-line interface: benchmark building, training, sampling,
evaluation, agreement reports, and the HTTP service."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .core import PromptKind, RngStream, load_image, load_mask, save_image
from .maskpolicy import MaskPolicyConfig, PolicyKind


def _parse_guidance(text: str):
    """'constant:7.5' or 'oscillate:1,30'."""
    from .sampler import GuidanceMode, GuidanceSchedule
    kind, _, rest = text.partition(":")
    try:
        if kind == "constant":
            w = float(rest)
            return GuidanceSchedule(mode=GuidanceMode.CONSTANT,
                                    low=w, high=w)
        if kind == "oscillate":
            lo, hi = (float(v) for v in rest.split(","))
            return GuidanceSchedule(mode=GuidanceMode.OSCILLATING,
                                    low=lo, high=hi)
    except ValueError as exc:
        raise click.BadParameter(f"bad guidance value {text!r}: {exc}")
    raise click.BadParameter(
        f"guidance must be constant:W or oscillate:LO,HI, got {text!r}")


@click.group()
def main():
    """Text-guided inpainting lab: train, sample, benchmark, evaluate."""


@main.group()
def bench():
    """Benchmark construction and inspection."""


@bench.command("build")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--n", "n_items", default=240, show_default=True)
@click.option("--seed", default=0, show_default=True)
def bench_build(out: Path, n_items: int, seed: int):
    """Render the benchmark and write its manifest + images."""
    from .scenegen import build_benchmark, write_benchmark
    items = build_benchmark(n_items=n_items,
                            rng=RngStream(seed, "bench"))
    manifest = write_benchmark(items, out)
    buckets = {}
    for item in items:
        buckets[item.bucket.value] = buckets.get(item.bucket.value, 0) + 1
    click.echo(f"wrote {len(items)} items to {manifest} "
               f"(buckets: {buckets})")


@main.group()
def train():
    """Stage training: pretraining and inpainting finetunes."""


def _train_config(policy, steps, seed, batch_size, stage):
    from .denoiser import Stage
    from .trainer import TrainConfig
    return TrainConfig(
        policy=MaskPolicyConfig(policy=PolicyKind[policy.upper()]),
        steps=steps, seed=seed, batch_size=batch_size,
        stage=Stage(stage))


@train.command("pretrain")
@click.option("--stage", type=click.Choice(["base", "sr"]), required=True)
@click.option("--scenes", default=200, show_default=True)
@click.option("--steps", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def train_pretrain(stage, scenes, steps, seed, batch_size, out):
    """Train a text-only stage to use as the finetuning base."""
    from .denoiser import Stage, save_checkpoint
    from .trainer import make_corpus, pretrain_stage
    cfg = _train_config("random", steps, seed, batch_size, stage)
    corpus = make_corpus(scenes, RngStream(seed, "corpus"))
    model, metrics = pretrain_stage(corpus, Stage(stage), cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stage}-pretrain-{cfg.config_hash()}.ckpt"
    save_checkpoint(model, path, extra={"loss": metrics[-1]["loss"]})
    click.echo(f"saved {path} (final loss {metrics[-1]['loss']:.4f})")


@train.command("finetune")
@click.option("--base-checkpoint", type=click.Path(path_type=Path),
              required=True)
@click.option("--policy", type=click.Choice(["random", "object_union"]),
              default="object_union", show_default=True)
@click.option("--scenes", default=200, show_default=True)
@click.option("--steps", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def train_finetune(base_checkpoint, policy, scenes, steps, seed,
                   batch_size, out):
    """Zero-init inpainting finetune from a pretrained stage."""
    from .denoiser import load_checkpoint
    from .trainer import finetune_stage, make_corpus
    base_model, _ = load_checkpoint(base_checkpoint)
    cfg = _train_config(policy, steps, seed, batch_size,
                        base_model.stage.value)
    corpus = make_corpus(scenes, RngStream(seed, "corpus"))
    out.mkdir(parents=True, exist_ok=True)
    model, metrics = finetune_stage(base_model, corpus, cfg, out_dir=out)
    click.echo(f"finetuned {base_model.stage.value}/{policy}: "
               f"final loss {metrics[-1]['loss']:.4f} -> {out}")


@main.command("sample")
@click.option("--image", "image_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--mask", "mask_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--prompt", required=True)
@click.option("--steps", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--guidance", default="oscillate:1,30", show_default=True,
              help="constant:W or oscillate:LO,HI")
@click.option("--n", "n_samples", default=1, show_default=True)
@click.option("--checkpoint-dir", type=click.Path(path_type=Path),
              required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def sample_cmd(image_path, mask_path, prompt, steps, seed, guidance,
               n_samples, checkpoint_dir, out):
    """Run the cascade on one image+mask+prompt; writes PNGs and a
    provenance JSON."""
    from .denoiser import ConditioningInput, load_checkpoint
    from .sampler import SampleRequest, sample
    paths = sorted(Path(checkpoint_dir).glob("*.ckpt"))
    base = next((p for p in paths if p.name.startswith("base-")), None)
    sr = next((p for p in paths if p.name.startswith("sr-")), None)
    if base is None or sr is None:
        raise click.ClickException(
            f"need base-*.ckpt and sr-*.ckpt in {checkpoint_dir}")
    base_model, _ = load_checkpoint(base)
    sr_model, _ = load_checkpoint(sr)
    image = load_image(image_path)
    mask = load_mask(mask_path)
    schedule = _parse_guidance(guidance)
    request = SampleRequest(
        cond=ConditioningInput.create(image, mask, prompt),
        image=image, n_samples=n_samples, steps=steps, seed=seed,
        guidance=schedule)
    outputs = sample(request, base_model, sr_model)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(outputs):
        path = out / f"sample-{seed}-{i}.png"
        save_image(img, path)
        names.append(path.name)
    (out / f"sample-{seed}.json").write_text(json.dumps({
        "prompt": prompt, "steps": steps, "seed": seed,
        "guidance": guidance, "outputs": names,
        "checkpoints": [base.name, sr.name]}, indent=2))
    click.echo(f"wrote {len(names)} samples to {out}")


@main.command("evaluate")
@click.option("--benchmark", "manifest", type=click.Path(path_type=Path),
              required=True, help="benchmark manifest JSONL")
@click.option("--samples", "samples_dir", type=click.Path(path_type=Path),
              required=True,
              help="layout: <dir>/<item>/<prompt_kind>/<model>/<i>.png")
@click.option("--models", required=True,
              help="comma-separated model ids; first is the anchor")
@click.option("--n-samples", default=4, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def evaluate_cmd(manifest, samples_dir, models, n_samples, out):
    """Run the full judge protocol; writes rating records JSONL."""
    from .evaljudge import JudgeConfig, records_to_jsonl, run_protocol
    from .scenegen import load_benchmark
    items = load_benchmark(manifest)
    model_ids = [m.strip() for m in models.split(",") if m.strip()]
    samples = {}
    for item in items:
        for kind in PromptKind:
            for model in model_ids:
                root = samples_dir / item.id / kind.value / model
                imgs = [load_image(p)
                        for p in sorted(root.glob("*.png"))[:n_samples]]
                samples[(item.id, kind, model)] = imgs
    records = run_protocol(items, model_ids, samples, JudgeConfig(),
                           n_samples=n_samples)
    records_to_jsonl(records, out)
    click.echo(f"wrote {len(records)} rating records to {out}")


@main.command("agree")
@click.option("--records", type=click.Path(path_type=Path), required=True)
@click.option("--scores", "scores_path", type=click.Path(path_type=Path),
              required=True,
              help="CSV: item_id,model_id,sample_index,score")
@click.option("--metric", default="T2I", show_default=True)
@click.option("--prompt-kind", default="MaskSimple", show_default=True)
@click.option("--region", default="Crop", show_default=True)
@click.option("--n-pairs", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def agree_cmd(records, scores_path, metric, prompt_kind, region, n_pairs,
              seed, out_dir):
    """Best-of-two agreement with bootstrap CI; writes CSV + Markdown."""
    import csv as csvmod

    from .agreement import (best_of_two_agreement, render_csv,
                            render_markdown)
    from .evaljudge import records_from_jsonl
    from .metrics import MetricKind, Region, ScoredSample
    ratings = records_from_jsonl(records)
    with open(scores_path) as fh:
        scores = [ScoredSample(r["item_id"], r["model_id"],
                               int(r["sample_index"]), float(r["score"]))
                  for r in csvmod.DictReader(fh)]
    kind = PromptKind(prompt_kind)
    ratings = [r for r in ratings
               if r.prompt_kind is kind and "|" not in r.model_id]
    report = best_of_two_agreement(
        scores, ratings, n_pairs=n_pairs,
        rng=RngStream(seed, "pairs"), prompt_kind=kind,
        region=Region(region), metric=MetricKind(metric))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "agreement.csv").write_text(render_csv([report]))
    (out_dir / "agreement.md").write_text(render_markdown([report]))
    (out_dir / "agreement.json").write_text(json.dumps({
        "prompt_kind": report.prompt_kind.value,
        "region": report.region.value,
        "metric": report.metric.value,
        "agreement_pct": report.agreement_pct,
        "ci95": list(report.ci95),
        "n_comparisons": report.n_comparisons,
        "random_baseline": report.random_baseline}, indent=2))
    click.echo(f"{metric} agreement {report.agreement_pct:.1f}% "
               f"[{report.ci95[0]:.1f}, {report.ci95[1]:.1f}] "
               f"over {report.n_comparisons} pairs -> {out_dir}")


@main.command("serve")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint-dir", type=click.Path(path_type=Path),
              default=None)
@click.option("--benchmark", type=click.Path(path_type=Path), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve_cmd(data_dir, checkpoint_dir, benchmark, host, port):
    """Start the HTTP inference/benchmark service."""
    import uvicorn

    from .service import ServiceConfig, create_app
    app = create_app(ServiceConfig(
        data_dir=data_dir, checkpoint_dir=checkpoint_dir,
        benchmark_path=benchmark))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
