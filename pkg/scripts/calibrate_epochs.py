"""Calibration probe: fair-test accuracy per epoch at b = 0.0 and b = 0.9.

Trains one model per bias level at full scale, evaluating on a shared fair
test set after every epoch, to pick the default epoch count.
"""

import json
import sys
import time

import numpy as np

from midbench.model import ModelSpec
from midbench.optim import make_optimizer
from midbench.sampling import BiasConfig, sample_unfair
from midbench.train import TrainConfig, evaluate, prepare_inputs, train_erm
from midbench.model import init_params, loss_grad_logits


def train_with_eval(bias, seed, epochs, test_ds, spec):
    train_ds = sample_unfair(BiasConfig(bias_level=bias, n_samples=30000, rng_seed=seed))
    cfg = TrainConfig(epochs=1, rng_seed=seed)
    params = init_params(spec, seed)
    opt = make_optimizer(cfg.optimizer, params, cfg.learning_rate)
    x_all = prepare_inputs(train_ds.images, spec.input_size)
    y_all = train_ds.columns["label"].astype(np.int64)
    n = x_all.shape[0]
    order_rng = np.random.default_rng(np.random.SeedSequence((seed, 200)))
    for epoch in range(epochs):
        t0 = time.time()
        order = order_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            bs = len(idx)
            acc = None
            for mstart in range(0, bs, 250):
                sl = idx[mstart : mstart + 250]
                loss, grads, logits = loss_grad_logits(params, x_all[sl], y_all[sl], spec)
                total_loss += loss * len(sl)
                correct += int((logits.argmax(1) == y_all[sl]).sum())
                scale = len(sl) / bs
                if acc is None:
                    acc = {k: v * scale for k, v in grads.items()}
                else:
                    for k in acc:
                        acc[k] += grads[k] * scale
            opt.step(params, acc)
        test = evaluate(params, test_ds, spec)
        row = {
            "bias": bias,
            "epoch": epoch,
            "train_loss": round(total_loss / n, 4),
            "train_acc_running": round(correct / n, 4),
            "test_acc": round(test["accuracy"], 4),
            "secs": round(time.time() - t0, 1),
        }
        print(json.dumps(row), flush=True)
    final_train = evaluate(params, train_ds, spec)
    print(json.dumps({"bias": bias, "final_train_acc": round(final_train["accuracy"], 4)}), flush=True)


def main():
    spec = ModelSpec()
    t0 = time.time()
    test_ds = sample_unfair(BiasConfig(bias_level=0.0, n_samples=10000, rng_seed=990001))
    print(json.dumps({"gen_test_secs": round(time.time() - t0, 1)}), flush=True)
    for bias in (0.0, 0.9):
        train_with_eval(bias, seed=0, epochs=15, test_ds=test_ds, spec=spec)


if __name__ == "__main__":
    main()
