"""Build a second, independent store for the determinism check: the same
b=0.8 cells and pipeline runs as the primary store, produced from scratch so
the two stores' metrics reports can be compared byte for byte.

Usage: python3 scripts/build_repeat.py [STORE_ROOT]   (default: store_repeat)
"""

import sys
import time

from midbench.config import default_config
from midbench.stages import run_cell, run_mid, run_id_for
from midbench.store import RunStore

BIAS = 0.8


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main() -> None:
    root = sys.argv[1] if len(sys.argv) > 1 else "store_repeat"
    store = RunStore(root)
    cfg = default_config()
    for seed in cfg["seeds"]:
        cell = run_cell(store, cfg, BIAS, seed)
        log(f"cell {cell['run_id']}: train {cell['train_accuracy']:.4f} "
            f"test {cell['test_accuracy']:.4f}")
        before, after = run_mid(store, run_id_for(BIAS, seed), cfg)
        log(f"mid {run_id_for(BIAS, seed)}: wga {before['worst_group_accuracy']:.4f} -> "
            f"{after['worst_group_accuracy']:.4f}")
    log("repeat store complete")


if __name__ == "__main__":
    main()
