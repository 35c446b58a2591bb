"""Pipeline stages over a RunStore: generate → train → extract → analyze →
triage → retrain → evaluate, plus the bias sweep and the end-to-end
mid-logit mitigation flow.

Every stage is idempotent: it hashes its config slice together with the
digests of its upstream artifacts, and a completed stage with a matching
input digest is skipped on re-run.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .analysis import (
    block_contrast,
    blocks_from_sorted_values,
    cosine_rsm,
    intercept_selection,
    pca2d,
    rank_logits,
    select_max_window,
)
from .clustering import sweep_k
from .imaging import export_montage
from .midt import read_midt, write_midt
from .mitigation import (
    RetrainConfig,
    TriageDecision,
    apply_retrained_classifier,
    assemble_retrain_set,
    group_metrics,
    retrain_last_layer,
    training_prevalences,
    triage_clusters,
    tune_l1_strength,
)
from .model import ModelSpec
from .oracle import CLASS_NAMES, dispute_labels, make_oracle
from .sampling import (
    CANONICAL_SEGMENT,
    BiasConfig,
    SpriteDataset,
    inject_label_flips,
    sample_unfair,
)
from .store import RunStore, StoreError, atomic_write_json, digest_of, sha256_file
from .train import (
    Checkpoint,
    TrainConfig,
    evaluate,
    extract_embeddings,
    load_embeddings,
    predict_labels,
    prepare_inputs,
    save_embeddings,
    train_erm,
)


class TriageRequired(RuntimeError):
    """Raised when the pipeline reaches triage without any decision source."""


def run_id_for(bias: float, seed: int) -> str:
    return f"b{bias:g}_s{seed}"


def _indices_of(ids_column: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    """Row indices of `wanted` ids inside the dataset's id column."""
    order = np.argsort(ids_column)
    pos = np.searchsorted(ids_column, wanted, sorter=order)
    if (pos >= len(order)).any():
        raise KeyError("unknown sample id")
    idx = order[pos]
    if not (ids_column[idx] == wanted).all():
        raise KeyError("unknown sample id")
    return idx


def _model_spec(cfg: dict) -> ModelSpec:
    m = cfg["model"]
    return ModelSpec(
        conv_channels=tuple(m["conv_channels"]),
        kernel_size=m["kernel_size"],
        fc_widths=tuple(m["fc_widths"]),
        input_size=m["input_size"],
    )


def _load_dataset(store: RunStore, run_id: str, stem: str) -> SpriteDataset:
    return SpriteDataset.load(store.path(run_id, "data"), stem=stem)


def _load_checkpoint(store: RunStore, run_id: str, subdir: str = "model") -> Checkpoint:
    return Checkpoint.load(store.path(run_id, subdir), stem="checkpoint")


def _file_artifacts(store: RunStore, run_id: str, rels) -> dict:
    return {rel: sha256_file(store.path(run_id, rel)) for rel in rels}


def _run_stage(store: RunStore, run_id: str, name: str, stage_cfg, produce):
    """Shared skip/execute/record skeleton. `produce` returns (artifacts, meta)."""
    store.require_ready(run_id, name)
    input_digest = store.stage_input_digest(run_id, name, stage_cfg)
    if store.is_current(run_id, name, input_digest):
        return store.stage(run_id, name)
    started = time.time()
    try:
        artifacts, meta = produce()
    except Exception as exc:
        store.mark_failed(run_id, name, f"{type(exc).__name__}: {exc}")
        raise
    meta = dict(meta)
    meta["seconds"] = round(time.time() - started, 3)
    store.mark_done(run_id, name, artifacts, meta, input_digest)
    return store.stage(run_id, name)


# -- individual stages ------------------------------------------------------


def stage_gen_data(store: RunStore, run_id: str, cfg: dict, bias: float, seed: int):
    data_cfg = cfg["data"]
    stage_cfg = {"bias": bias, "seed": seed, **data_cfg}

    def produce():
        train = sample_unfair(
            BiasConfig(bias_level=bias, n_samples=data_cfg["n_train"], rng_seed=seed)
        )
        if data_cfg["label_flip_fraction"] > 0:
            train = inject_label_flips(train, data_cfg["label_flip_fraction"], seed)
        test = sample_unfair(
            BiasConfig(
                bias_level=0.0,
                n_samples=data_cfg["n_test"],
                rng_seed=seed + data_cfg["test_seed_offset"],
            )
        )
        data_dir = store.path(run_id, "data")
        train.save(data_dir, stem="train")
        test.save(data_dir, stem="test")
        rels = ["data/train.midt", "data/train.jsonl", "data/test.midt", "data/test.jsonl"]
        counts = np.bincount(train.columns["group"], minlength=9)
        meta = {
            "bias": bias,
            "seed": seed,
            "n_train": len(train),
            "n_test": len(test),
            "train_group_counts": counts.tolist(),
        }
        return _file_artifacts(store, run_id, rels), meta

    return _run_stage(store, run_id, "gen_data", stage_cfg, produce)


def stage_train(store: RunStore, run_id: str, cfg: dict, seed: int):
    stage_cfg = {"train": cfg["train"], "model": cfg["model"], "seed": seed}

    def produce():
        spec = _model_spec(cfg)
        train_cfg = TrainConfig(
            learning_rate=cfg["train"]["learning_rate"],
            optimizer=cfg["train"]["optimizer"],
            batch_size=cfg["train"]["batch_size"],
            epochs=cfg["train"]["epochs"],
            rng_seed=seed,
        )
        train_ds = _load_dataset(store, run_id, "train")
        test_ds = _load_dataset(store, run_id, "test")
        ck = train_erm(spec, train_ds, train_cfg)
        ck.save(store.path(run_id, "model"), stem="checkpoint")
        train_eval = evaluate(ck.params, train_ds, spec)
        test_eval = evaluate(ck.params, test_ds, spec)
        rels = ["model/checkpoint.midt", "model/checkpoint.json"]
        meta = {
            "final_train_accuracy": round(train_eval["accuracy"], 6),
            "fair_test_accuracy": round(test_eval["accuracy"], 6),
            # Architecture and epoch count are calibration choices, so they
            # are echoed here where downstream reports can surface them.
            "model": cfg["model"],
            "epochs": cfg["train"]["epochs"],
        }
        return _file_artifacts(store, run_id, rels), meta

    return _run_stage(store, run_id, "train", stage_cfg, produce)


def stage_extract(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = {"rsm_n": cfg["rsm"]["n_samples"]}

    def produce():
        spec = _model_spec(cfg)
        ck = _load_checkpoint(store, run_id)
        train_ds = _load_dataset(store, run_id, "train")
        test_ds = _load_dataset(store, run_id, "test")
        ids, emb, logits = extract_embeddings(ck.params, train_ds, spec)
        save_embeddings(store.path(run_id, "analysis/train_embeddings.midt"), ids, emb, logits)
        n_rsm = min(cfg["rsm"]["n_samples"], len(test_ds))
        sub = test_ds.subset(np.arange(n_rsm))
        tids, temb, tlogits = extract_embeddings(ck.params, sub, spec)
        save_embeddings(store.path(run_id, "analysis/test_embeddings.midt"), tids, temb, tlogits)
        rels = ["analysis/train_embeddings.midt", "analysis/test_embeddings.midt"]
        return _file_artifacts(store, run_id, rels), {"train_rows": len(ids), "test_rows": int(n_rsm)}

    return _run_stage(store, run_id, "extract", stage_cfg, produce)


def _metrics_report(store, run_id, cfg, params, label):
    spec = _model_spec(cfg)
    train_ds = _load_dataset(store, run_id, "train")
    test_ds = _load_dataset(store, run_id, "test")
    preds = predict_labels(params, prepare_inputs(test_ds.images, spec.input_size), spec)
    prevalences = training_prevalences(train_ds.columns["group"])
    report = group_metrics(
        predictions=preds,
        labels=test_ds.columns["label"],
        groups=test_ds.columns["group"],
        prevalences=prevalences,
        config_digest=store.manifest(run_id)["config_digest"],
    )
    rel = f"reports/metrics_{label}.json"
    store.put_bytes(run_id, rel, report.to_json().encode())
    return report, rel


def stage_eval_erm(store: RunStore, run_id: str, cfg: dict):
    def produce():
        ck = _load_checkpoint(store, run_id)
        report, rel = _metrics_report(store, run_id, cfg, ck.params, "before")
        meta = {
            "worst_group_accuracy": report.worst_group_accuracy,
            "weighted_mean_accuracy": report.weighted_mean_accuracy,
        }
        return _file_artifacts(store, run_id, [rel]), meta

    return _run_stage(store, run_id, "eval_erm", {}, produce)


def stage_rsm(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = {"n_samples": cfg["rsm"]["n_samples"]}

    def produce():
        tids, temb, _ = load_embeddings(store.path(run_id, "analysis/test_embeddings.midt"))
        test_ds = _load_dataset(store, run_id, "test")
        idx = _indices_of(test_ds.columns["id"], tids)
        artifacts = {}
        meta = {}
        for key, values in (
            ("shape", test_ds.columns["shape"][idx]),
            ("position", test_ds.columns["spurious"][idx]),
        ):
            matrix, ordered_ids, order = cosine_rsm(temb, tids, values, key)
            blocks = blocks_from_sorted_values(values[order])
            contrast = block_contrast(matrix, blocks)
            base = f"analysis/rsm_{key}"
            write_midt(store.path(run_id, base + ".midt"), {"rsm": matrix})
            store.put_json(
                run_id,
                base + ".json",
                {
                    "sort_key": key,
                    "order_ids": [int(i) for i in ordered_ids],
                    "block_sizes": blocks,
                    "block_contrast": contrast,
                },
            )
            artifacts.update(_file_artifacts(store, run_id, [base + ".midt", base + ".json"]))
            meta[f"{key}_contrast"] = round(contrast, 6)
        return artifacts, meta

    return _run_stage(store, run_id, "rsm", stage_cfg, produce)


def stage_intercept(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = dict(cfg["intercept"])

    def produce():
        ids, _, logits = load_embeddings(store.path(run_id, "analysis/train_embeddings.midt"))
        window = cfg["intercept"]
        m = min(max(1, int(window["window_fraction"] * len(ids))), window["cap"])
        selection = intercept_selection(ids, logits, m=m, mode=window["mode"])
        max_windows = {}
        for c in range(logits.shape[1]):
            ranking = rank_logits(ids, logits, c)
            max_windows[c] = select_max_window(ranking, m)
        train_ds = _load_dataset(store, run_id, "train")
        train_idx = _indices_of(train_ds.columns["id"], ids)
        labels = train_ds.columns["label"][train_idx]
        errors = logits.argmax(axis=1) != labels
        union_mask = np.isin(ids, selection.selected)
        err_total = int(errors.sum())
        err_in_window = int((errors & union_mask).sum())
        payload = selection.to_dict()
        payload["max_windows"] = {str(c): [int(i) for i in v] for c, v in max_windows.items()}
        payload["errors_total"] = err_total
        payload["errors_in_window"] = err_in_window
        store.put_json(run_id, "analysis/intercept.json", payload)
        meta = {
            "window_size": selection.m,
            "mode": selection.mode,
            "union_size": int(selection.selected.size),
            # Share of the model's training-set errors that fall inside the
            # mid-logit union; reported, never asserted.
            "error_capture_fraction": round(err_in_window / err_total, 6) if err_total else None,
        }
        return _file_artifacts(store, run_id, ["analysis/intercept.json"]), meta

    return _run_stage(store, run_id, "intercept", stage_cfg, produce)


def stage_dispute(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = dict(cfg["oracle"])

    def produce():
        oracle = make_oracle(cfg["oracle"]["name"], endpoint=cfg["oracle"]["endpoint"])
        payload = store.read_json(run_id, "analysis/intercept.json")
        union = np.array(sorted(payload["selected"]), dtype=np.uint64)
        train_ds = _load_dataset(store, run_id, "train")
        kept, disputed = dispute_labels(oracle, train_ds, union)
        store.put_json(
            run_id,
            "analysis/dispute.json",
            {
                "oracle": cfg["oracle"]["name"],
                "kept": [int(i) for i in kept],
                "disputed": [int(i) for i in disputed],
            },
        )
        meta = {"kept": int(kept.size), "disputed": int(disputed.size)}
        return _file_artifacts(store, run_id, ["analysis/dispute.json"]), meta

    return _run_stage(store, run_id, "dispute", stage_cfg, produce)


def _minority_mask_for(ds: SpriteDataset, idx: np.ndarray) -> np.ndarray:
    labels = ds.columns["label"][idx]
    spurious = ds.columns["spurious"][idx]
    canonical = np.array([CANONICAL_SEGMENT[label] for label in labels])
    return spurious != canonical


def stage_cluster(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = dict(cfg["cluster"])

    def produce():
        cl = cfg["cluster"]
        dispute = store.read_json(run_id, "analysis/dispute.json")
        kept = np.array(sorted(dispute["kept"]), dtype=np.uint64)
        ids, emb, _ = load_embeddings(store.path(run_id, "analysis/train_embeddings.midt"))
        emb_idx = _indices_of(ids, kept)
        kept_emb = emb[emb_idx]
        train_ds = _load_dataset(store, run_id, "train")
        ds_idx = _indices_of(train_ds.columns["id"], kept)
        groups = train_ds.columns["group"][ds_idx]
        minority = _minority_mask_for(train_ds, ds_idx)
        lo, hi = cl["k_range"]
        results = sweep_k(
            kept_emb,
            range(lo, hi + 1),
            seed=cl["seed"],
            n_init=cl["n_init"],
            max_iter=cl["max_iter"],
            group_ids=groups,
            minority_mask=minority,
        )
        k_final = cl["k_final"]
        final = next(r for r in results if r["k"] == k_final)
        assignment = final["assignment"]
        coords = pca2d(kept_emb)
        store.put_json(
            run_id,
            "analysis/clusters.json",
            {
                "k_final": k_final,
                "seed": cl["seed"],
                "minority_base_rate": round(float(minority.mean()), 6),
                "sweep": [
                    {
                        "k": r["k"],
                        "inertia": r["assignment"].inertia,
                        "composition": r["composition"],
                    }
                    for r in results
                ],
                "assignments": [
                    {"id": int(i), "cluster": int(c)}
                    for i, c in zip(kept, assignment.labels)
                ],
                "centroids": [[float(v) for v in row] for row in assignment.centroids],
                "composition": final["composition"],
            },
        )
        store.put_json(
            run_id,
            "analysis/projection.json",
            {
                "points": [
                    {"id": int(i), "x": round(float(x), 6), "y": round(float(y), 6), "cluster": int(c)}
                    for i, (x, y), c in zip(kept, coords, assignment.labels)
                ]
            },
        )
        rels = ["analysis/clusters.json", "analysis/projection.json"]
        meta = {
            "k_final": k_final,
            "inertia": assignment.inertia,
            "n_points": int(kept.size),
        }
        return _file_artifacts(store, run_id, rels), meta

    return _run_stage(store, run_id, "cluster", stage_cfg, produce)


def stage_triage(store: RunStore, run_id: str, cfg: dict, decisions=None, source=None):
    """`decisions` (cluster -> tag), when given, overrides the config policy;
    the API passes the UI selection through here with source "interactive"."""
    triage_cfg = cfg["triage"]
    if decisions is None and triage_cfg["policy"] == "headless":
        rows = triage_cfg["decisions"]
        if not rows:
            raise TriageRequired("headless triage policy without decisions")
        decisions = {int(r["cluster"]): r["tag"] for r in rows}
        source = "headless"
    stage_cfg = {
        "policy": triage_cfg["policy"],
        "decisions": None if decisions is None else sorted(decisions.items()),
        "source": source,
    }

    def produce():
        clusters = store.read_json(run_id, "analysis/clusters.json")
        k = clusters["k_final"]
        if decisions is not None:
            decision = triage_clusters(k, decisions=decisions, source=source or "headless")
        elif cfg["triage"]["policy"] == "auto":
            decision = triage_clusters(k, composition=clusters["composition"])
        else:
            raise TriageRequired("no triage decisions available")
        store.put_json(run_id, "triage/decision.json", decision.to_dict())
        meta = {
            "source": decision.source,
            "retrain_clusters": decision.retrain_clusters(),
        }
        return _file_artifacts(store, run_id, ["triage/decision.json"]), meta

    return _run_stage(store, run_id, "triage", stage_cfg, produce)


def stage_retrain(store: RunStore, run_id: str, cfg: dict):
    stage_cfg = dict(cfg["retrain"])

    def produce():
        retrain_cfg = cfg["retrain"]
        clusters = store.read_json(run_id, "analysis/clusters.json")
        decision_doc = store.read_json(run_id, "triage/decision.json")
        decision = TriageDecision.from_dict(decision_doc)
        cluster_ids = np.array([r["id"] for r in clusters["assignments"]], dtype=np.uint64)
        cluster_labels = np.array([r["cluster"] for r in clusters["assignments"]])
        train_ds = _load_dataset(store, run_id, "train")
        id_to_label = {
            int(i): int(label)
            for i, label in zip(train_ds.columns["id"], train_ds.columns["label"])
        }
        split = assemble_retrain_set(
            kept_ids=cluster_ids,
            cluster_ids=cluster_ids,
            cluster_labels=cluster_labels,
            decision=decision,
            all_train_ids=train_ds.columns["id"],
            id_to_label=id_to_label,
            majority_mix_fraction=retrain_cfg["majority_mix_fraction"],
            seed=retrain_cfg["rng_seed"],
        )
        ids, emb, _ = load_embeddings(store.path(run_id, "analysis/train_embeddings.midt"))

        def emb_of(wanted):
            return emb[_indices_of(ids, wanted)]

        def labels_of(wanted):
            return np.array([id_to_label[int(i)] for i in wanted])

        # The strength is tuned on standardized features with fit-half
        # statistics; the final averaged model re-standardizes on the full
        # retrain set inside retrain_last_layer.
        fit_x = emb_of(split.fit_ids).astype(np.float64)
        tune_x = emb_of(split.tune_ids).astype(np.float64)
        mu, sigma = fit_x.mean(axis=0), fit_x.std(axis=0)
        sigma[sigma < 1e-12] = 1.0
        lam = tune_l1_strength(
            (tune_x - mu) / sigma,
            labels_of(split.tune_ids),
            (fit_x - mu) / sigma,
            labels_of(split.fit_ids),
            grid=tuple(retrain_cfg["l1_grid"]),
        )
        full_ids = np.concatenate([split.tune_ids, split.fit_ids])
        clf = retrain_last_layer(
            emb_of(full_ids),
            labels_of(full_ids),
            lam,
            RetrainConfig(
                l1_grid=tuple(retrain_cfg["l1_grid"]),
                n_repeats=retrain_cfg["n_repeats"],
                majority_mix_fraction=retrain_cfg["majority_mix_fraction"],
                rng_seed=retrain_cfg["rng_seed"],
            ),
        )
        ck = _load_checkpoint(store, run_id)
        new_params = apply_retrained_classifier(ck.params, clf)
        retrained = Checkpoint(
            spec=ck.spec, train_config=ck.train_config, params=new_params, epoch_log=ck.epoch_log
        )
        retrained.save(store.path(run_id, "model_retrained"), stem="checkpoint")
        store.put_json(
            run_id,
            "retrain/classifier.json",
            {
                "strength": lam,
                "n_repeats": retrain_cfg["n_repeats"],
                "weights": [[float(v) for v in row] for row in clf.weights],
                "bias": [float(v) for v in clf.bias],
                "mu": [float(v) for v in clf.mu],
                "sigma": [float(v) for v in clf.sigma],
                "tune_ids": [int(i) for i in split.tune_ids],
                "fit_ids": [int(i) for i in split.fit_ids],
                "mix_ids": [int(i) for i in split.mix_ids],
            },
        )
        rels = [
            "model_retrained/checkpoint.midt",
            "model_retrained/checkpoint.json",
            "retrain/classifier.json",
        ]
        meta = {
            "strength": lam,
            "retrain_size": int(split.retrain_ids.size),
            "mix_size": int(split.mix_ids.size),
            "fit_size": int(split.fit_ids.size),
            "tune_size": int(split.tune_ids.size),
        }
        return _file_artifacts(store, run_id, rels), meta

    return _run_stage(store, run_id, "retrain", stage_cfg, produce)


def stage_eval_retrained(store: RunStore, run_id: str, cfg: dict):
    def produce():
        ck = _load_checkpoint(store, run_id, "model_retrained")
        report, rel = _metrics_report(store, run_id, cfg, ck.params, "after")
        meta = {
            "worst_group_accuracy": report.worst_group_accuracy,
            "weighted_mean_accuracy": report.weighted_mean_accuracy,
        }
        return _file_artifacts(store, run_id, [rel]), meta

    return _run_stage(store, run_id, "eval_retrained", {}, produce)


def stage_montage(store: RunStore, run_id: str, cfg: dict, per_montage: int = 6):
    stage_cfg = {"per_montage": per_montage}

    def produce():
        payload = store.read_json(run_id, "analysis/intercept.json")
        ids, _, logits = load_embeddings(store.path(run_id, "analysis/train_embeddings.midt"))
        train_ds = _load_dataset(store, run_id, "train")
        logit_of = {}
        rels = []
        for c, name in enumerate(CLASS_NAMES):
            for kind, id_list in (
                ("max", payload["max_windows"][str(c)]),
                ("intercept", payload["per_class"][str(c)]),
            ):
                chosen = np.array(id_list[:per_montage], dtype=np.uint64)
                idx = _indices_of(train_ds.columns["id"], chosen)
                images = [train_ds.images[i] for i in idx]
                emb_idx = _indices_of(ids, chosen)
                values = [float(logits[i, c]) for i in emb_idx]
                rel = f"reports/montage_{kind}_{name}.png"
                export_montage(
                    images,
                    store.path(run_id, rel),
                    logit_values=values,
                    sample_ids=[int(i) for i in chosen],
                )
                rels.append(rel)
                logit_of[f"{kind}_{name}"] = len(images)
        return _file_artifacts(store, run_id, rels), {"montages": logit_of}

    return _run_stage(store, run_id, "montage", stage_cfg, produce)


# -- composed flows ------------------------------------------------------


def run_cell(store: RunStore, cfg: dict, bias: float, seed: int) -> dict:
    """One sweep cell: data + training + accuracy summary."""
    run_id = run_id_for(bias, seed)
    store.create_run(run_id, {"experiment": cfg, "bias": bias, "seed": seed})
    stage_gen_data(store, run_id, cfg, bias, seed)
    train_stage = stage_train(store, run_id, cfg, seed)
    return {
        "run_id": run_id,
        "bias": bias,
        "seed": seed,
        "train_accuracy": train_stage["meta"]["final_train_accuracy"],
        "test_accuracy": train_stage["meta"]["fair_test_accuracy"],
    }


def _cell_worker(store_root: str, cfg: dict, bias: float, seed: int):
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    store = RunStore(store_root)
    return run_cell(store, cfg, bias, seed)


def mean_and_ci(values) -> dict:
    """Normal-approximation 95% interval: mean ± 1.96 · std / sqrt(n)."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        half = 0.0
    else:
        half = float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))
    return {"mean": round(mean, 6), "ci95_half_width": round(half, 6)}


def run_sweep(store: RunStore, cfg: dict, n_workers: int = 1) -> dict:
    """Train the full bias × seed grid and aggregate accuracies. Failed cells
    are recorded and skipped in the aggregates; the sweep keeps going."""
    cells = []
    jobs = [(bias, seed) for bias in cfg["bias_levels"] for seed in cfg["seeds"]]
    started = time.time()
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {
                pool.submit(_cell_worker, store.root, cfg, bias, seed): (bias, seed)
                for bias, seed in jobs
            }
            for future, (bias, seed) in futures.items():
                try:
                    cells.append(future.result())
                except Exception as exc:
                    cells.append(
                        {"run_id": run_id_for(bias, seed), "bias": bias, "seed": seed,
                         "error": f"{type(exc).__name__}: {exc}"}
                    )
    else:
        for bias, seed in jobs:
            try:
                cells.append(run_cell(store, cfg, bias, seed))
            except Exception as exc:
                cells.append(
                    {"run_id": run_id_for(bias, seed), "bias": bias, "seed": seed,
                     "error": f"{type(exc).__name__}: {exc}"}
                )
    cells.sort(key=lambda c: (c["bias"], c["seed"]))
    by_bias = []
    for bias in sorted(cfg["bias_levels"]):
        ok = [c for c in cells if c["bias"] == bias and "error" not in c]
        if not ok:
            by_bias.append({"bias": bias, "n_cells": 0})
            continue
        by_bias.append(
            {
                "bias": bias,
                "n_cells": len(ok),
                "train_accuracy": mean_and_ci([c["train_accuracy"] for c in ok]),
                "test_accuracy": mean_and_ci([c["test_accuracy"] for c in ok]),
            }
        )
    report = {
        "config": cfg,
        "cells": cells,
        "by_bias": by_bias,
        "wall_seconds": round(time.time() - started, 1),
    }
    sweep_id = digest_of({"bias_levels": cfg["bias_levels"], "seeds": cfg["seeds"],
                          "data": cfg["data"], "model": cfg["model"], "train": cfg["train"]})[:12]
    path = os.path.join(store.root, "sweeps", sweep_id, "report.json")
    atomic_write_json(path, report)
    report["sweep_id"] = sweep_id
    report["report_path"] = path
    return report


def run_mid(store: RunStore, run_id: str, cfg: dict, decisions=None, source=None):
    """Steps 2-4 plus evaluation on an already trained run: intercept
    filtering, label-dispute filtering, clustering, triage, last-layer
    retraining, and the before/after group-metrics reports."""
    if not store.run_exists(run_id):
        raise StoreError(f"no such run {run_id}")
    stage_extract(store, run_id, cfg)
    stage_eval_erm(store, run_id, cfg)
    stage_rsm(store, run_id, cfg)
    stage_intercept(store, run_id, cfg)
    stage_dispute(store, run_id, cfg)
    stage_cluster(store, run_id, cfg)
    stage_triage(store, run_id, cfg, decisions=decisions, source=source)
    stage_retrain(store, run_id, cfg)
    stage_eval_retrained(store, run_id, cfg)
    stage_montage(store, run_id, cfg)
    before = store.read_json(run_id, "reports/metrics_before.json")
    after = store.read_json(run_id, "reports/metrics_after.json")
    return before, after
