"""Extract embeddings and representation-similarity matrices for the bias
extremes (b=0 and b=0.9, all seeds). The sweep trains these cells; this adds
the analysis artifacts the similarity-contrast checks read.

Usage: python3 scripts/prep_rsm_runs.py [STORE_ROOT]
"""

import sys
import time

from midbench.config import default_config
from midbench.stages import run_id_for, stage_extract, stage_rsm
from midbench.store import RunStore


def main() -> None:
    root = sys.argv[1] if len(sys.argv) > 1 else "store"
    store = RunStore(root)
    cfg = default_config()
    for bias in (0.0, 0.9):
        for seed in cfg["seeds"]:
            run_id = run_id_for(bias, seed)
            stage_extract(store, run_id, cfg)
            stage = stage_rsm(store, run_id, cfg)
            meta = stage["meta"]
            print(f"[{time.strftime('%H:%M:%S')}] rsm {run_id}: "
                  f"shape {meta['shape_contrast']:.4f} "
                  f"position {meta['position_contrast']:.4f}", flush=True)


if __name__ == "__main__":
    main()
