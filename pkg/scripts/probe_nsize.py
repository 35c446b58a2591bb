"""Probe fair-test accuracy vs training-set size at a given bias level.

Prints per-epoch train/fair-test accuracy so a dataset size can be picked
where the high-bias model stays near chance on fair data while still
fitting its training set.
"""
import json
import sys
import time

sys.path.insert(0, "src")

from midbench.model import ModelSpec
from midbench.sampling import BiasConfig, sample_unfair
from midbench.train import TrainConfig, evaluate, train_erm

def run_cell(bias, n, epochs, seed, c1, c2):
    SPEC = ModelSpec(conv_channels=(c1, c2))
    ds = sample_unfair(BiasConfig(bias_level=bias, n_samples=n, rng_seed=seed))
    test = sample_unfair(BiasConfig(bias_level=0.0, n_samples=3000, rng_seed=990001))
    state = {"t0": time.time()}

    def log_epoch(epoch, params):
        train_eval = evaluate(params, ds, SPEC)
        test_eval = evaluate(params, test, SPEC)
        print(
            json.dumps(
                {
                    "bias": bias,
                    "n": n,
                    "conv": [c1, c2],
                    "epoch": epoch,
                    "train_acc": round(train_eval["accuracy"], 4),
                    "test_acc": round(test_eval["accuracy"], 4),
                    "secs": round(time.time() - state["t0"], 1),
                }
            ),
            flush=True,
        )
        state["t0"] = time.time()

    cfg = TrainConfig(epochs=epochs, rng_seed=seed)
    train_erm(SPEC, ds, cfg, on_epoch=log_epoch)


if __name__ == "__main__":
    bias = float(sys.argv[1])
    n = int(sys.argv[2])
    epochs = int(sys.argv[3])
    seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0
    c1 = int(sys.argv[5]) if len(sys.argv) > 5 else 16
    c2 = int(sys.argv[6]) if len(sys.argv) > 6 else 32
    run_cell(bias, n, epochs, seed, c1, c2)
