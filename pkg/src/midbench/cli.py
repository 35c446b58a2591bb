"""Command-line entry points.

Every subcommand that executes pipeline stages works against a run store;
stages that are already up to date (matching input digests) are skipped, so
commands are safe to re-run. Exit status is nonzero iff a requested stage
failed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import stages
from .api import ENV_BIND, ENV_STORE_ROOT, create_app
from .config import default_config, load_config
from .mitigation import ingest_group_manifest
from .stages import run_id_for
from .store import RunStore, digest_of
from .train import load_embeddings


def _store(args) -> RunStore:
    root = args.store or os.environ.get(ENV_STORE_ROOT)
    if not root:
        raise SystemExit("a store root is required (--store or MIDBENCH_STORE)")
    return RunStore(root)


def _config(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return default_config()


def _run_config(store: RunStore, run_id: str) -> dict:
    from .config import validate

    manifest = store.manifest(run_id)
    return validate(manifest["config"]["experiment"])


def _ensure_run(store: RunStore, cfg: dict, bias: float, seed: int) -> str:
    run_id = run_id_for(bias, seed)
    store.create_run(run_id, {"experiment": cfg, "bias": bias, "seed": seed})
    return run_id


def cmd_gen_data(args) -> None:
    store, cfg = _store(args), _config(args)
    run_id = _ensure_run(store, cfg, args.bias, args.seed)
    stage = stages.stage_gen_data(store, run_id, cfg, args.bias, args.seed)
    print(json.dumps({"run_id": run_id, **stage["meta"]}))


def cmd_train(args) -> None:
    store, cfg = _store(args), _config(args)
    run_id = _ensure_run(store, cfg, args.bias, args.seed)
    stages.stage_gen_data(store, run_id, cfg, args.bias, args.seed)
    stage = stages.stage_train(store, run_id, cfg, args.seed)
    print(json.dumps({"run_id": run_id, **stage["meta"]}))


def cmd_sweep(args) -> None:
    store, cfg = _store(args), _config(args)
    report = stages.run_sweep(store, cfg, n_workers=args.workers)
    for level in report["by_bias"]:
        if not level["n_cells"]:
            print(f"bias {level['bias']:>4}: no surviving cells")
            continue
        t = level["test_accuracy"]
        print(
            f"bias {level['bias']:>4}: test {t['mean']:.4f} "
            f"+/- {t['ci95_half_width']:.4f}  ({level['n_cells']} cells)"
        )
    failed = [c for c in report["cells"] if "error" in c]
    for cell in failed:
        print(f"FAILED {cell['run_id']}: {cell['error']}", file=sys.stderr)
    print(f"report: {report['report_path']}")
    if failed:
        raise SystemExit(1)


def _stage_on_run(args, fn_name: str, *extra) -> dict:
    store = _store(args)
    cfg = _run_config(store, args.run)
    fn = getattr(stages, fn_name)
    return store, fn(store, args.run, cfg, *extra)


def cmd_extract(args) -> None:
    _, stage = _stage_on_run(args, "stage_extract")
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_rsm(args) -> None:
    _, stage = _stage_on_run(args, "stage_rsm")
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_intercept(args) -> None:
    _, stage = _stage_on_run(args, "stage_intercept")
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_cluster(args) -> None:
    store = _store(args)
    cfg = _run_config(store, args.run)
    stages.stage_dispute(store, args.run, cfg)
    stage = stages.stage_cluster(store, args.run, cfg)
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_triage(args) -> None:
    store = _store(args)
    cfg = _run_config(store, args.run)
    decisions = None
    if args.decisions:
        raw = args.decisions
        if os.path.isfile(raw):
            with open(raw) as fh:
                raw = fh.read()
        decisions = {int(k): v for k, v in json.loads(raw).items()}
    stage = stages.stage_triage(store, args.run, cfg, decisions=decisions)
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_retrain(args) -> None:
    _, stage = _stage_on_run(args, "stage_retrain")
    print(json.dumps({"run_id": args.run, **stage["meta"]}))


def cmd_eval(args) -> None:
    store = _store(args)
    cfg = _run_config(store, args.run)
    out = {}
    if args.which in ("before", "both"):
        stages.stage_eval_erm(store, args.run, cfg)
        out["before"] = store.read_json(args.run, "reports/metrics_before.json")
    if args.which in ("after", "both"):
        stages.stage_eval_retrained(store, args.run, cfg)
        out["after"] = store.read_json(args.run, "reports/metrics_after.json")
    brief = {
        k: {
            "worst_group_accuracy": v["worst_group_accuracy"],
            "weighted_mean_accuracy": v["weighted_mean_accuracy"],
        }
        for k, v in out.items()
    }
    print(json.dumps({"run_id": args.run, **brief}))


def cmd_montage(args) -> None:
    _, stage = _stage_on_run(args, "stage_montage")
    print(json.dumps({"run_id": args.run, "files": sorted(stage["artifacts"])}))


def cmd_serve(args) -> None:
    import uvicorn

    bind = args.bind or os.environ.get(ENV_BIND, "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    app = create_app(args.store or os.environ.get(ENV_STORE_ROOT))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


def cmd_ingest_embeddings(args) -> None:
    store = _store(args)
    ids, embeddings, logits = load_embeddings(args.file)
    if not np.isfinite(embeddings).all() or not np.isfinite(logits).all():
        raise SystemExit("embeddings file contains non-finite values")
    rel = "analysis/train_embeddings.midt"
    with open(args.file, "rb") as fh:
        digest = store.put_bytes(args.run, rel, fh.read())
    meta = {
        "source": "ingested",
        "n_samples": int(len(ids)),
        "embedding_dim": int(embeddings.shape[1]),
    }

    def mutate(manifest):
        stage = manifest["stages"]["extract"]
        stage["state"] = "done"
        stage["input_digest"] = digest_of({"ingested": digest})
        stage["artifacts"] = {rel: digest}
        stage["meta"] = meta

    store._update_manifest(args.run, mutate)
    if args.coords:
        with open(args.coords) as fh:
            doc = json.load(fh)
        points = doc["points"] if isinstance(doc, dict) else doc
        known = set(int(i) for i in ids)
        for p in points:
            if int(p["id"]) not in known:
                raise SystemExit(f"coordinate row id {p['id']} not in embeddings file")
            p.setdefault("cluster", None)
        store.put_json(args.run, "analysis/projection.json", {"points": points, "source": "ingested"})
    print(json.dumps({"run_id": args.run, **meta}))


def cmd_ingest_groups(args) -> None:
    summary = ingest_group_manifest(args.file)
    text = json.dumps(summary, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="midbench",
        description="Bias-sweep workbench: train shortcut-prone classifiers on "
        "controllably biased sprite data, find suspect samples via mid-range "
        "logits, cluster and triage them, and retrain the last layer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--store", default=None, help="run store root (or MIDBENCH_STORE)")
        return p

    p = add("gen-data", cmd_gen_data, help="render a biased train set and a fair test set")
    p.add_argument("--bias", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None, help="experiment config YAML")

    p = add("train", cmd_train, help="train the reference CNN on a run's data")
    p.add_argument("--bias", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None)

    p = add("sweep", cmd_sweep, help="train the full bias × seed grid and aggregate")
    p.add_argument("--config", default=None)
    p.add_argument("--workers", type=int, default=1)

    for name, fn, doc in (
        ("extract", cmd_extract, "export embeddings and logits for a trained run"),
        ("rsm", cmd_rsm, "representational similarity matrices (shape and position sorts)"),
        ("intercept", cmd_intercept, "select mid-range and maximal logit windows"),
        ("cluster", cmd_cluster, "label-dispute filtering plus k-means over the kept set"),
        ("retrain", cmd_retrain, "L1 last-layer retraining from the triage decision"),
        ("montage", cmd_montage, "per-class image grids for max and mid-range windows"),
    ):
        p = add(name, fn, help=doc)
        p.add_argument("--run", required=True)

    p = add("triage", cmd_triage, help="record cluster tags (headless)")
    p.add_argument("--run", required=True)
    p.add_argument(
        "--decisions",
        default=None,
        help='JSON object or file mapping cluster id to tag, e.g. \'{"0": "retrain"}\'',
    )

    p = add("eval", cmd_eval, help="group metrics on the fair test set")
    p.add_argument("--run", required=True)
    p.add_argument("--which", choices=("before", "after", "both"), default="before")

    p = add("serve", cmd_serve, help="serve the HTTP JSON API (and UI if built)")
    p.add_argument("--bind", default=None, help="host:port (or MIDBENCH_BIND)")

    p = add("ingest-embeddings", cmd_ingest_embeddings,
            help="install externally computed embeddings into a run")
    p.add_argument("--run", required=True)
    p.add_argument("--file", required=True, help="embeddings container (id, embeddings, logits)")
    p.add_argument("--coords", default=None, help="optional external 2D coordinates JSON")

    p = add("ingest-groups", cmd_ingest_groups,
            help="summarize an external per-sample (id, y, s) manifest")
    p.add_argument("--file", required=True)
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
