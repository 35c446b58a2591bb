"""Populate a persistent run store with the full bias sweep plus the
mid-logit pipeline runs used by the report notebooks and the test suite.

Priority-ordered: single-seed previews land first so trend lines can be
inspected while the bulk of the grid trains.

Usage: python3 scripts/build_store.py [STORE_ROOT]
"""

import json
import sys
import time

from midbench.config import default_config
from midbench.stages import run_cell, run_mid, run_sweep
from midbench.store import RunStore

MID_BIASES = (0.7, 0.8)


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main() -> None:
    root = sys.argv[1] if len(sys.argv) > 1 else "store"
    store = RunStore(root)
    cfg = default_config()

    preview = [(0.8, 0), (0.0, 0), (0.9, 0), (0.3, 0), (0.1, 0), (0.5, 0)]
    for bias, seed in preview:
        cell = run_cell(store, cfg, bias, seed)
        log(f"cell {cell['run_id']}: train {cell['train_accuracy']:.4f} "
            f"test {cell['test_accuracy']:.4f}")

    before, after = run_mid(store, "b0.8_s0", cfg)
    log(f"mid b0.8_s0: wga {before['worst_group_accuracy']:.4f} -> "
        f"{after['worst_group_accuracy']:.4f}, "
        f"mean {before['weighted_mean_accuracy']:.4f} -> "
        f"{after['weighted_mean_accuracy']:.4f}")

    done = set(preview)
    for bias in cfg["bias_levels"]:
        for seed in cfg["seeds"]:
            if (bias, seed) in done:
                continue
            cell = run_cell(store, cfg, bias, seed)
            log(f"cell {cell['run_id']}: train {cell['train_accuracy']:.4f} "
                f"test {cell['test_accuracy']:.4f}")

    for bias in MID_BIASES:
        for seed in cfg["seeds"]:
            run_id = f"b{bias:g}_s{seed}"
            before, after = run_mid(store, run_id, cfg)
            log(f"mid {run_id}: wga {before['worst_group_accuracy']:.4f} -> "
                f"{after['worst_group_accuracy']:.4f}")

    report = run_sweep(store, cfg)
    log("sweep report: " + json.dumps(report["by_bias"], indent=None))
    log("store build complete")


if __name__ == "__main__":
    main()
