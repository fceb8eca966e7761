"""HTTP inference and benchmark service.

Endpoints:
  POST /v1/edit                submit an edit job (multipart PNG + PNG + text)
  GET  /v1/edit/{job_id}       poll job status / outputs / provenance
  GET  /v1/files/{name}        fetch a content-addressed output PNG
  GET  /v1/benchmark/items     browse benchmark metadata with filters
  GET  /v1/reports/latest      latest agreement report

Jobs run on a single background worker thread against a sqlite store, so
the service survives restarts with job history intact. Outputs are
content-addressed PNG files; a job's provenance records seed, guidance
schedule, and checkpoint hashes.
"""

from __future__ import annotations

import io
import json
import os
import queue
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .core import (AttributeCategory, ImageBuffer, MaskBuffer, SizeBucket,
                   image_content_hash)
from .scenegen import load_benchmark

MAX_PAYLOAD_BYTES = 8 * 1024 * 1024
CHECKPOINT_DIR_ENV = "INPAINTLAB_CHECKPOINT_DIR"


@dataclass
class ServiceConfig:
    data_dir: Path
    checkpoint_dir: Path | None = None
    benchmark_path: Path | None = None
    max_payload_bytes: int = MAX_PAYLOAD_BYTES

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.checkpoint_dir is None and os.environ.get(CHECKPOINT_DIR_ENV):
            self.checkpoint_dir = Path(os.environ[CHECKPOINT_DIR_ENV])


def _error(status: int, reason: str, detail: str = "") -> HTTPException:
    return HTTPException(status_code=status,
                         detail={"reason": reason, "detail": detail})


def _decode_png(data: bytes, what: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB" if what == "image" else "L"))
    except Exception as exc:
        raise _error(400, "bad_png", f"{what}: {exc}")


class JobStore:
    """sqlite-backed job table; safe for one writer thread + readers."""

    def __init__(self, path: Path):
        self._path = str(path)
        with self._conn() as db:
            db.execute(
                "CREATE TABLE IF NOT EXISTS jobs ("
                "id TEXT PRIMARY KEY, status TEXT NOT NULL, "
                "request TEXT NOT NULL, outputs TEXT, error TEXT, "
                "provenance TEXT, created REAL, started REAL, finished REAL)")

    def _conn(self):
        return sqlite3.connect(self._path, timeout=10)

    def create(self, job_id: str, request: dict):
        with self._conn() as db:
            db.execute(
                "INSERT INTO jobs (id, status, request, created) "
                "VALUES (?, 'queued', ?, ?)",
                (job_id, json.dumps(request), time.time()))

    def update(self, job_id: str, **fields):
        sets = ", ".join(f"{k} = ?" for k in fields)
        with self._conn() as db:
            db.execute(f"UPDATE jobs SET {sets} WHERE id = ?",
                       (*fields.values(), job_id))

    def get(self, job_id: str):
        with self._conn() as db:
            row = db.execute(
                "SELECT id, status, request, outputs, error, provenance, "
                "created, started, finished FROM jobs WHERE id = ?",
                (job_id,)).fetchone()
        if row is None:
            return None
        keys = ["id", "status", "request", "outputs", "error",
                "provenance", "created", "started", "finished"]
        rec = dict(zip(keys, row))
        for k in ("request", "outputs", "provenance"):
            rec[k] = json.loads(rec[k]) if rec[k] else None
        return rec


class FileStore:
    """Content-addressed PNG store."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put_image(self, img: ImageBuffer) -> str:
        name = image_content_hash(img)[:24] + ".png"
        path = self.root / name
        if not path.exists():
            arr = np.clip(np.round(img.data * 255), 0, 255).astype(np.uint8)
            Image.fromarray(arr).save(path)
        return name

    def path(self, name: str) -> Path:
        if "/" in name or ".." in name:
            raise _error(400, "bad_file_name", name)
        return self.root / name


def default_sampler(cfg: ServiceConfig):
    """Build the cascade sampler from checkpoints; None when absent."""
    if cfg.checkpoint_dir is None:
        return None
    from .denoiser import ConditioningInput, load_checkpoint
    from .sampler import GuidanceSchedule, SampleRequest, sample
    paths = sorted(Path(cfg.checkpoint_dir).glob("*.ckpt"))
    base = next((p for p in paths if p.name.startswith("base-")), None)
    sr = next((p for p in paths if p.name.startswith("sr-")), None)
    if base is None or sr is None:
        return None
    base_model, _ = load_checkpoint(base)
    sr_model, _ = load_checkpoint(sr)

    def run(image, mask, prompt, params, seed):
        schedule = GuidanceSchedule(
            low=float(params.get("guidance_low", 1.0)),
            high=float(params.get("guidance_high", 30.0)))
        request = SampleRequest(
            cond=ConditioningInput.create(image, mask, prompt),
            image=image,
            n_samples=int(params.get("n_samples", 1)),
            steps=int(params.get("steps", 32)),
            seed=seed, guidance=schedule)
        outs = sample(request, base_model, sr_model)
        provenance = {"checkpoints": [base.name, sr.name]}
        return outs, provenance

    return run


def create_app(cfg: ServiceConfig, sampler=None) -> FastAPI:
    """App factory. `sampler(image, mask, prompt, params, seed) ->
    (outputs, provenance)` may be injected; without one (and without
    checkpoints) only empty-mask identity edits succeed.
    """
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    store = JobStore(cfg.data_dir / "jobs.sqlite")
    files = FileStore(cfg.data_dir / "files")
    if sampler is None:
        sampler = default_sampler(cfg)
    benchmark = None
    if cfg.benchmark_path and Path(cfg.benchmark_path).exists():
        benchmark = load_benchmark(cfg.benchmark_path)

    jobs: queue.Queue = queue.Queue()

    def worker():
        while True:
            job_id = jobs.get()
            if job_id is None:
                return
            _run_job(job_id)
            jobs.task_done()

    def _run_job(job_id: str):
        rec = store.get(job_id)
        store.update(job_id, status="running", started=time.time())
        try:
            req = rec["request"]
            image = ImageBuffer(np.array(req.pop("_image")))
            mask = MaskBuffer(np.array(req.pop("_mask"), dtype=np.uint8))
            params = req["params"]
            seed = int(params.get("seed", 0))
            n = int(params.get("n_samples", 1))
            provenance = {"seed": seed,
                          "guidance": {"low": params.get("guidance_low", 1.0),
                                       "high": params.get("guidance_high",
                                                          30.0)}}
            if not mask.data.any():
                outputs = [image] * n
            elif sampler is None:
                raise RuntimeError("no sampler configured "
                                   f"(set {CHECKPOINT_DIR_ENV})")
            else:
                # sample() composites outputs onto the context already
                outputs, extra = sampler(image, mask, req["prompt"],
                                         params, seed)
                provenance.update(extra)
            names = [files.put_image(o) for o in outputs]
            store.update(job_id, status="done",
                         outputs=json.dumps(
                             [f"/v1/files/{n}" for n in names]),
                         provenance=json.dumps(provenance),
                         finished=time.time())
        except Exception as exc:
            store.update(job_id, status="failed", error=str(exc),
                         finished=time.time())

    app = FastAPI(title="inpaintlab")
    app.state.config = cfg
    app.state.store = store
    app.state.files = files

    started = threading.Event()

    def ensure_worker():
        if not started.is_set():
            started.set()
            threading.Thread(target=worker, daemon=True).start()

    @app.post("/v1/edit", status_code=202)
    async def submit_edit(request: Request,
                          image: UploadFile, mask: UploadFile,
                          prompt: str = Form(""),
                          params: str = Form("{}")):
        body_image = await image.read()
        body_mask = await mask.read()
        if len(body_image) + len(body_mask) > cfg.max_payload_bytes:
            raise _error(413, "payload_too_large",
                         f"limit {cfg.max_payload_bytes} bytes")
        try:
            params_obj = json.loads(params)
        except json.JSONDecodeError as exc:
            raise _error(400, "bad_params_json", str(exc))
        img_arr = _decode_png(body_image, "image")
        mask_arr = _decode_png(body_mask, "mask")
        if img_arr.shape[:2] != mask_arr.shape[:2]:
            raise _error(400, "shape_mismatch",
                         f"image {img_arr.shape[:2]} vs "
                         f"mask {mask_arr.shape[:2]}")
        if not prompt and not params_obj.get("unconditional"):
            raise _error(400, "empty_prompt",
                         "pass a prompt or set params.unconditional")
        ensure_worker()
        job_id = uuid.uuid4().hex
        store.create(job_id, {
            "prompt": prompt, "params": params_obj,
            "_image": (img_arr / 255.0).tolist(),
            "_mask": (mask_arr > 127).astype(int).tolist()})
        jobs.put(job_id)
        return {"job_id": job_id}

    @app.get("/v1/edit/{job_id}")
    def get_edit(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise _error(404, "unknown_job", job_id)
        out = {"job_id": rec["id"], "status": rec["status"],
               "outputs": rec["outputs"] or [],
               "provenance": rec["provenance"],
               "error": rec["error"],
               "timings": {k: rec[k] for k in
                           ("created", "started", "finished")}}
        return out

    @app.get("/v1/files/{name}")
    def get_file(name: str):
        path = files.path(name)
        if not path.exists():
            raise _error(404, "unknown_file", name)
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/v1/benchmark/items")
    def benchmark_items(bucket: str = "", category: str = "",
                        page: int = 0, page_size: int = 50):
        want = None
        if bucket:
            try:
                want = SizeBucket(bucket)
            except ValueError:
                raise _error(400, "unknown_bucket", bucket)
        known_categories = {c.value for c in AttributeCategory}
        if category and category not in known_categories:
            raise _error(400, "unknown_category", category)
        if benchmark is None:
            return {"items": [], "page": page, "total": 0}
        items = benchmark
        if want is not None:
            items = [i for i in items if i.bucket is want]
        if category:
            items = [i for i in items
                     if i.attribute_category.value == category]
        start = page * page_size
        rows = [{"id": i.id, "bucket": i.bucket.value,
                 "attribute_category": i.attribute_category.value,
                 "object_category": i.object_category.value,
                 "scene": i.scene_tag,
                 "prompts": {k.value: p.text
                             for k, p in i.prompts.items()}}
                for i in items[start:start + page_size]]
        return {"items": rows, "page": page, "total": len(items)}

    @app.get("/v1/reports/latest")
    def latest_report():
        report_dir = cfg.data_dir / "reports"
        candidates = sorted(report_dir.glob("*.json")) \
            if report_dir.exists() else []
        if not candidates:
            raise _error(404, "no_reports", "run an evaluation first")
        latest = max(candidates, key=lambda p: p.stat().st_mtime)
        return JSONResponse(json.loads(latest.read_text()))

    return app
