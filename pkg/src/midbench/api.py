"""HTTP JSON API over a RunStore, consumed by the browser triage client.

Read endpoints are side-effect-free. Retrain requests become queued jobs:
one background worker drains the queue in arrival order, so at most one
retrain executes per run (and, with the single worker, globally); job state
is persisted in the store and polled via GET /api/jobs/{job_id}.
"""

import json
import os
import queue
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from .config import validate as validate_config
from .imaging import png_bytes
from .sampling import SpriteDataset
from .stages import stage_eval_retrained, stage_retrain, stage_triage
from .store import RunStore, StoreError, sha256_bytes
from .train import load_embeddings

ENV_STORE_ROOT = "MIDBENCH_STORE"
ENV_BIND = "MIDBENCH_BIND"
ENV_ORACLE_ENDPOINT = "MIDBENCH_ORACLE_ENDPOINT"


class JobQueue:
    """FIFO retrain queue with one worker thread; per-run exclusivity falls
    out of the single worker draining in arrival order."""

    def __init__(self, store: RunStore):
        self.store = store
        self.queue = queue.Queue()
        self.worker = None
        self.lock = threading.Lock()

    def _ensure_worker(self):
        with self.lock:
            if self.worker is None or not self.worker.is_alive():
                self.worker = threading.Thread(target=self._drain, daemon=True)
                self.worker.start()

    def submit(self, run_id: str, decisions, source: str) -> dict:
        job = {
            "job_id": uuid.uuid4().hex[:12],
            "run_id": run_id,
            "state": "pending",
            "error": None,
        }
        self.store.write_job(job)
        self.queue.put((job["job_id"], run_id, decisions, source))
        self._ensure_worker()
        return job

    def _drain(self):
        while True:
            try:
                job_id, run_id, decisions, source = self.queue.get(timeout=1.0)
            except queue.Empty:
                return
            job = self.store.read_job(job_id)
            job["state"] = "running"
            self.store.write_job(job)
            try:
                cfg = self._run_config(run_id)
                stage_triage(self.store, run_id, cfg, decisions=decisions, source=source)
                stage_retrain(self.store, run_id, cfg)
                stage_eval_retrained(self.store, run_id, cfg)
                job["state"] = "done"
            except Exception as exc:
                job["state"] = "failed"
                job["error"] = f"{type(exc).__name__}: {exc}"
            self.store.write_job(job)

    def _run_config(self, run_id: str) -> dict:
        manifest = self.store.manifest(run_id)
        return validate_config(manifest["config"]["experiment"])


def _dataset_cache(store: RunStore):
    cache = {}

    def load(run_id: str, stem: str) -> SpriteDataset:
        key = (run_id, stem)
        if key not in cache:
            cache.clear()  # one dataset pair in memory at a time
            cache[key] = SpriteDataset.load(store.path(run_id, "data"), stem=stem)
        return cache[key]

    return load


def create_app(store_root: str | None = None) -> FastAPI:
    root = store_root or os.environ.get(ENV_STORE_ROOT)
    if not root:
        raise StoreError(f"store root required (flag or {ENV_STORE_ROOT})")
    store = RunStore(root)
    jobs = JobQueue(store)
    load_dataset = _dataset_cache(store)
    app = FastAPI(title="mid-logit workbench API", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.jobs = jobs

    def manifest_or_404(run_id: str) -> dict:
        try:
            return store.manifest(run_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"no such run {run_id}")

    @app.get("/api/runs")
    def list_runs():
        out = []
        for run_id in store.list_runs():
            manifest = store.manifest(run_id)
            stages_state = {k: v["state"] for k, v in manifest["stages"].items()}
            cfg = manifest["config"]
            out.append(
                {
                    "run_id": run_id,
                    "bias": cfg.get("bias"),
                    "seed": cfg.get("seed"),
                    "stages": stages_state,
                    "config_digest": manifest["config_digest"],
                }
            )
        return {"runs": out}

    @app.get("/api/runs/{run_id}/clusters")
    def get_clusters(run_id: str):
        manifest = manifest_or_404(run_id)
        if manifest["stages"]["cluster"]["state"] != "done":
            raise HTTPException(status_code=404, detail="clustering not available yet")
        doc = store.read_json(run_id, "analysis/clusters.json")
        counts = {}
        for row in doc["assignments"]:
            counts[row["cluster"]] = counts.get(row["cluster"], 0) + 1
        clusters = [
            {"cluster": c, "size": counts.get(c, 0)} for c in range(doc["k_final"])
        ]
        if doc.get("composition"):
            for entry in doc["composition"]:
                clusters[entry["cluster"]]["minority_fraction"] = entry["minority_fraction"]
        return {
            "run_id": run_id,
            "k": doc["k_final"],
            "minority_base_rate": doc.get("minority_base_rate"),
            "clusters": clusters,
        }

    @app.get("/api/runs/{run_id}/clusters/{k}/samples")
    def get_cluster_samples(run_id: str, k: int, limit: int = 50, offset: int = 0):
        manifest_or_404(run_id)
        doc = store.read_json(run_id, "analysis/clusters.json")
        if not 0 <= k < doc["k_final"]:
            raise HTTPException(status_code=404, detail=f"no cluster {k}")
        if limit < 1 or offset < 0:
            raise HTTPException(status_code=422, detail="bad paging parameters")
        member_ids = [row["id"] for row in doc["assignments"] if row["cluster"] == k]
        window = member_ids[offset : offset + limit]
        ds = load_dataset(run_id, "train")
        ids_list = ds.columns["id"].tolist()
        index_of = {i: pos for pos, i in enumerate(ids_list)}
        emb_ids, _, logits = load_embeddings(store.path(run_id, "analysis/train_embeddings.midt"))
        logit_index = {int(i): pos for pos, i in enumerate(emb_ids)}
        samples = []
        for sid in window:
            pos = index_of[sid]
            samples.append(
                {
                    "id": sid,
                    "label": int(ds.columns["label"][pos]),
                    "shape": int(ds.columns["shape"][pos]),
                    "spurious": int(ds.columns["spurious"][pos]),
                    "logits": [round(float(v), 4) for v in logits[logit_index[sid]]],
                    "image_url": f"/api/images/{run_id}/{sid}.png",
                }
            )
        return {
            "run_id": run_id,
            "cluster": k,
            "total": len(member_ids),
            "offset": offset,
            "samples": samples,
        }

    @app.get("/api/images/{run_id}/{sample_id}.png")
    def get_image(run_id: str, sample_id: int):
        manifest_or_404(run_id)
        for stem in ("train", "test"):
            ds = load_dataset(run_id, stem)
            matches = np.nonzero(ds.columns["id"] == np.uint64(sample_id))[0]
            if matches.size:
                data = png_bytes(ds.images[int(matches[0])])
                return Response(content=data, media_type="image/png")
        raise HTTPException(status_code=404, detail=f"no sample {sample_id}")

    @app.get("/api/runs/{run_id}/selection")
    def get_selection(run_id: str):
        manifest_or_404(run_id)
        path = store.path(run_id, "triage/selection.json")
        if not os.path.isfile(path):
            raise HTTPException(status_code=404, detail="no selection saved")
        with open(path, "rb") as fh:
            data = fh.read()
        return Response(
            content=data,
            media_type="application/json",
            headers={"ETag": sha256_bytes(data)},
        )

    @app.post("/api/runs/{run_id}/selection")
    async def post_selection(run_id: str, request: Request):
        manifest_or_404(run_id)
        data = await request.body()
        try:
            doc = json.loads(data)
        except ValueError:
            raise HTTPException(status_code=422, detail="selection must be JSON")
        if not isinstance(doc, dict) or "tags" not in doc:
            raise HTTPException(status_code=422, detail="selection needs a tags object")
        expected = request.headers.get("If-Match")
        path = store.path(run_id, "triage/selection.json")
        if expected and os.path.isfile(path):
            with open(path, "rb") as fh:
                current = sha256_bytes(fh.read())
            if current != expected:
                raise HTTPException(status_code=409, detail="selection changed underneath you")
        # Stored byte-for-byte as posted so GET round-trips exactly.
        store.put_bytes(run_id, "triage/selection.json", data)
        return {"etag": sha256_bytes(data)}

    @app.post("/api/runs/{run_id}/retrain")
    async def post_retrain(run_id: str, request: Request):
        manifest_or_404(run_id)
        body = await request.body()
        decisions = None
        if body:
            try:
                doc = json.loads(body)
            except ValueError:
                raise HTTPException(status_code=422, detail="body must be JSON")
            rows = doc.get("decisions")
            if rows:
                decisions = {int(r["cluster"]): r["tag"] for r in rows}
        if decisions is None:
            path = store.path(run_id, "triage/selection.json")
            if not os.path.isfile(path):
                raise HTTPException(
                    status_code=409, detail="no selection saved and no decisions given"
                )
            with open(path) as fh:
                selection = json.load(fh)
            decisions = {int(c): t for c, t in selection["tags"].items()}
        job = jobs.submit(run_id, decisions, "interactive")
        return {"job_id": job["job_id"], "state": job["state"]}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return jobs.store.read_job(job_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"no such job {job_id}")

    @app.get("/api/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        manifest = manifest_or_404(run_id)
        out = {"run_id": run_id}
        for label, rel in (("before", "reports/metrics_before.json"), ("after", "reports/metrics_after.json")):
            if os.path.isfile(store.path(run_id, rel)):
                out[label] = store.read_json(run_id, rel, verify=False)
            else:
                out[label] = None
        if out["before"] is None:
            raise HTTPException(status_code=404, detail="metrics not computed yet")
        return out

    @app.get("/api/runs/{run_id}/projection")
    def get_projection(run_id: str):
        manifest = manifest_or_404(run_id)
        if manifest["stages"]["cluster"]["state"] != "done":
            raise HTTPException(status_code=404, detail="projection not available yet")
        return store.read_json(run_id, "analysis/projection.json")

    # Static frontend, when built (secondary component).
    frontend_dir = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "frontend", "dist")
    if os.path.isdir(frontend_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app
