"""Run store: a per-run directory tree with a JSON manifest as the single
source of truth.

Every artifact file is content-addressed in the manifest (sha256), stages
form a fixed dependency graph, and all manifest mutations go through atomic
file replacement guarded by an advisory lock, so concurrent readers (the API
service) never observe a torn manifest.
"""

import fcntl
import hashlib
import json
import os
import tempfile
import time

STAGES = (
    "gen_data",
    "train",
    "extract",
    "eval_erm",
    "rsm",
    "intercept",
    "dispute",
    "cluster",
    "triage",
    "retrain",
    "eval_retrained",
    "montage",
)

UPSTREAM = {
    "gen_data": (),
    "train": ("gen_data",),
    "extract": ("train",),
    "eval_erm": ("extract",),
    "rsm": ("extract",),
    "intercept": ("extract",),
    "dispute": ("intercept",),
    "cluster": ("dispute",),
    "triage": ("cluster",),
    "retrain": ("triage",),
    "eval_retrained": ("retrain",),
    "montage": ("intercept",),
}

MANIFEST_NAME = "manifest.json"


class StoreError(RuntimeError):
    pass


class StageNotReady(StoreError):
    """A stage was asked to run before its upstream stages completed."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    return sha256_bytes(canonical_json(obj).encode())


def atomic_write_bytes(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode())


def _fresh_manifest(run_id: str, config: dict) -> dict:
    return {
        "run_id": run_id,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": config,
        "config_digest": digest_of(config),
        "stages": {
            name: {"state": "pending", "artifacts": {}, "meta": {}, "input_digest": None}
            for name in STAGES
        },
    }


class RunStore:
    """Filesystem layout:

    root/
      runs/<run_id>/manifest.json          stage states + artifact digests
      runs/<run_id>/<stage artifacts...>   paths relative to the run dir
      jobs/<job_id>.json                   async retrain job records
    """

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        os.makedirs(os.path.join(self.root, "runs"), exist_ok=True)
        os.makedirs(os.path.join(self.root, "jobs"), exist_ok=True)

    # -- paths ------------------------------------------------------------

    def run_dir(self, run_id: str) -> str:
        if not run_id or "/" in run_id or run_id.startswith("."):
            raise StoreError(f"bad run id {run_id!r}")
        return os.path.join(self.root, "runs", run_id)

    def path(self, run_id: str, rel: str) -> str:
        if rel.startswith("/") or ".." in rel.split("/"):
            raise StoreError(f"bad artifact path {rel!r}")
        return os.path.join(self.run_dir(run_id), rel)

    def _manifest_path(self, run_id: str) -> str:
        return os.path.join(self.run_dir(run_id), MANIFEST_NAME)

    # -- runs --------------------------------------------------------------

    def list_runs(self) -> list:
        base = os.path.join(self.root, "runs")
        out = []
        for name in sorted(os.listdir(base)):
            if os.path.isfile(os.path.join(base, name, MANIFEST_NAME)):
                out.append(name)
        return out

    def run_exists(self, run_id: str) -> bool:
        return os.path.isfile(self._manifest_path(run_id))

    def create_run(self, run_id: str, config: dict) -> dict:
        path = self._manifest_path(run_id)
        if os.path.exists(path):
            existing = self.manifest(run_id)
            if existing["config_digest"] != digest_of(config):
                raise StoreError(f"run {run_id} exists with a different config")
            return existing
        manifest = _fresh_manifest(run_id, config)
        atomic_write_json(path, manifest)
        return manifest

    def manifest(self, run_id: str) -> dict:
        path = self._manifest_path(run_id)
        if not os.path.isfile(path):
            raise StoreError(f"no such run {run_id}")
        with open(path) as fh:
            return json.load(fh)

    def _update_manifest(self, run_id: str, mutate) -> dict:
        """Read-modify-write under an advisory lock; atomic replacement."""
        lock_path = os.path.join(self.run_dir(run_id), ".lock")
        with open(lock_path, "w") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX)
            manifest = self.manifest(run_id)
            mutate(manifest)
            atomic_write_json(self._manifest_path(run_id), manifest)
        return manifest

    # -- artifacts -----------------------------------------------------------

    def put_bytes(self, run_id: str, rel: str, data: bytes) -> str:
        atomic_write_bytes(self.path(run_id, rel), data)
        return sha256_bytes(data)

    def put_json(self, run_id: str, rel: str, obj) -> str:
        data = (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()
        return self.put_bytes(run_id, rel, data)

    def read_bytes(self, run_id: str, rel: str, verify: bool = False) -> bytes:
        path = self.path(run_id, rel)
        if not os.path.isfile(path):
            raise StoreError(f"missing artifact {rel} in run {run_id}")
        with open(path, "rb") as fh:
            data = fh.read()
        if verify:
            recorded = self._recorded_digest(run_id, rel)
            if recorded is not None and sha256_bytes(data) != recorded:
                raise StoreError(f"digest mismatch for {rel} in run {run_id}")
        return data

    def read_json(self, run_id: str, rel: str, verify: bool = False):
        return json.loads(self.read_bytes(run_id, rel, verify=verify))

    def _recorded_digest(self, run_id: str, rel: str):
        manifest = self.manifest(run_id)
        for stage in manifest["stages"].values():
            if rel in stage["artifacts"]:
                return stage["artifacts"][rel]
        return None

    # -- stages --------------------------------------------------------------

    def stage(self, run_id: str, name: str) -> dict:
        manifest = self.manifest(run_id)
        if name not in manifest["stages"]:
            raise StoreError(f"unknown stage {name}")
        return manifest["stages"][name]

    def upstream_done(self, run_id: str, name: str) -> bool:
        manifest = self.manifest(run_id)
        return all(manifest["stages"][up]["state"] == "done" for up in UPSTREAM[name])

    def require_ready(self, run_id: str, name: str) -> None:
        if not self.upstream_done(run_id, name):
            missing = [
                up
                for up in UPSTREAM[name]
                if self.manifest(run_id)["stages"][up]["state"] != "done"
            ]
            raise StageNotReady(f"stage {name} needs {missing} done first")

    def stage_input_digest(self, run_id: str, name: str, stage_config) -> str:
        """Identity of a stage execution: its config slice plus the digests of
        everything upstream produced. Matching digest => skippable re-run."""
        manifest = self.manifest(run_id)
        upstream_art = {
            up: manifest["stages"][up]["artifacts"] for up in UPSTREAM[name]
        }
        return digest_of({"config": stage_config, "upstream": upstream_art})

    def is_current(self, run_id: str, name: str, input_digest: str) -> bool:
        stage = self.stage(run_id, name)
        if stage["state"] != "done" or stage["input_digest"] != input_digest:
            return False
        for rel in stage["artifacts"]:
            if not os.path.isfile(self.path(run_id, rel)):
                return False
        return True

    def mark_done(
        self, run_id: str, name: str, artifacts: dict, meta: dict, input_digest: str
    ) -> dict:
        def mutate(manifest):
            manifest["stages"][name] = {
                "state": "done",
                "artifacts": artifacts,
                "meta": meta,
                "input_digest": input_digest,
            }

        return self._update_manifest(run_id, mutate)

    def mark_failed(self, run_id: str, name: str, error: str) -> dict:
        def mutate(manifest):
            stage = manifest["stages"][name]
            stage["state"] = "failed"
            stage["meta"] = {"error": error}

        return self._update_manifest(run_id, mutate)

    def verify_run(self, run_id: str) -> list:
        """Re-hash every recorded artifact; returns a list of mismatches."""
        manifest = self.manifest(run_id)
        bad = []
        for name, stage in manifest["stages"].items():
            for rel, digest in stage["artifacts"].items():
                path = self.path(run_id, rel)
                if not os.path.isfile(path):
                    bad.append((name, rel, "missing"))
                elif sha256_file(path) != digest:
                    bad.append((name, rel, "digest mismatch"))
        return bad

    # -- jobs ------------------------------------------------------------

    def job_path(self, job_id: str) -> str:
        if not job_id or "/" in job_id or job_id.startswith("."):
            raise StoreError(f"bad job id {job_id!r}")
        return os.path.join(self.root, "jobs", job_id + ".json")

    def write_job(self, job: dict) -> None:
        atomic_write_json(self.job_path(job["job_id"]), job)

    def read_job(self, job_id: str) -> dict:
        path = self.job_path(job_id)
        if not os.path.isfile(path):
            raise StoreError(f"no such job {job_id}")
        with open(path) as fh:
            return json.load(fh)
