"""Create a small seeded run for interactive UI work: a few thousand samples,
a short training schedule, and the full pipeline through clustering, so the
browser client has clusters, a projection, thumbnails, and before-metrics to
show within a couple of minutes.

Usage: python3 scripts/make_fixture_run.py [STORE_ROOT] [BIAS] [SEED]
       (defaults: /tmp/fixture_store 0.7 0)

Then:  midbench serve --store STORE_ROOT
"""

import sys
import time

from midbench.config import default_config
from midbench.stages import (
    run_id_for,
    run_cell,
    stage_cluster,
    stage_dispute,
    stage_eval_erm,
    stage_extract,
    stage_intercept,
)
from midbench.store import RunStore


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main() -> None:
    root = sys.argv[1] if len(sys.argv) > 1 else "/tmp/fixture_store"
    bias = float(sys.argv[2]) if len(sys.argv) > 2 else 0.7
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    cfg = default_config(
        data={"n_train": 3000, "n_test": 1000},
        train={"epochs": 6, "batch_size": 250},
        rsm={"n_samples": 300},
        cluster={"k_range": [2, 5], "k_final": 3},
    )
    store = RunStore(root)
    run_id = run_id_for(bias, seed)
    cell = run_cell(store, cfg, bias, seed)
    log(f"cell {run_id}: train {cell['train_accuracy']:.4f} test {cell['test_accuracy']:.4f}")
    stage_extract(store, run_id, cfg)
    stage_intercept(store, run_id, cfg)
    stage_dispute(store, run_id, cfg)
    stage_cluster(store, run_id, cfg)
    stage_eval_erm(store, run_id, cfg)
    log(f"fixture run ready at {root}/runs/{run_id}; serve with: "
        f"midbench serve --store {root}")


if __name__ == "__main__":
    main()
