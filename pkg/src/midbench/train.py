"""ERM training loop, evaluation, and embedding extraction.

Training is single-threaded and bitwise deterministic given (spec, data,
seed): batch order, micro-batch accumulation order, and init all derive from
the run seed. Large optimizer batches are processed in fixed-size micro
batches with gradient accumulation to bound peak memory.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .midt import read_midt, write_midt
from .model import ModelSpec, NonFiniteError, check_params, forward, init_params, loss_grad_logits
from .optim import make_optimizer
from .sampling import SpriteDataset
from .sprites import downsample_2x

MICRO_BATCH = 250


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, message: str):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 1000
    epochs: int = 12
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(d["learning_rate"]),
            optimizer=str(d["optimizer"]),
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            rng_seed=int(d["rng_seed"]),
        )


@dataclass
class Checkpoint:
    spec: ModelSpec
    train_config: TrainConfig
    params: dict[str, np.ndarray]
    epoch_log: list[dict] = field(default_factory=list)

    def save(self, directory: str, stem: str = "checkpoint") -> None:
        os.makedirs(directory, exist_ok=True)
        check_params(self.spec, self.params)
        write_midt(os.path.join(directory, f"{stem}.midt"), self.params)
        sidecar = {
            "spec": self.spec.to_dict(),
            "train_config": self.train_config.to_dict(),
            "epoch_log": self.epoch_log,
        }
        tmp = os.path.join(directory, f"{stem}.json.tmp")
        with open(tmp, "w") as fh:
            json.dump(sidecar, fh, indent=1)
        os.replace(tmp, os.path.join(directory, f"{stem}.json"))

    @classmethod
    def load(cls, directory: str, stem: str = "checkpoint") -> "Checkpoint":
        params = read_midt(os.path.join(directory, f"{stem}.midt"))
        with open(os.path.join(directory, f"{stem}.json")) as fh:
            sidecar = json.load(fh)
        spec = ModelSpec.from_dict(sidecar["spec"])
        check_params(spec, params)
        return cls(
            spec=spec,
            train_config=TrainConfig.from_dict(sidecar["train_config"]),
            params=params,
            epoch_log=sidecar["epoch_log"],
        )


def prepare_inputs(images: np.ndarray, input_size: int) -> np.ndarray:
    """uint8 (n,64,64) images -> float32 (n,1,s,s) network inputs."""
    if input_size == images.shape[1]:
        x = images.astype(np.float32)
    elif input_size * 2 == images.shape[1]:
        x = downsample_2x(images)
    else:
        raise ValueError(f"cannot map {images.shape[1]}px images to input_size {input_size}")
    return x[:, None, :, :]


def _micro_slices(n: int, micro: int = MICRO_BATCH):
    for start in range(0, n, micro):
        yield slice(start, min(start + micro, n))


def train_erm(
    spec: ModelSpec,
    train_set: SpriteDataset,
    cfg: TrainConfig,
    on_epoch=None,
) -> Checkpoint:
    """Standard ERM training with mean cross-entropy. Logs per-epoch train
    loss/accuracy; aborts with the epoch index if the loss goes non-finite.
    `on_epoch(epoch, params)`, if given, runs after each epoch's updates."""
    params = init_params(spec, cfg.rng_seed)
    opt = make_optimizer(cfg.optimizer, params, cfg.learning_rate)
    x_all = prepare_inputs(train_set.images, spec.input_size)
    y_all = train_set.columns["label"].astype(np.int64)
    n = x_all.shape[0]
    order_rng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 200)))
    epoch_log = []

    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            bs = len(batch_idx)
            grads_acc = None
            for sl in _micro_slices(bs):
                xb = x_all[batch_idx[sl]]
                yb = y_all[batch_idx[sl]]
                try:
                    loss, grads, logits = loss_grad_logits(params, xb, yb, spec)
                except NonFiniteError as e:
                    raise TrainingDiverged(epoch, str(e)) from e
                mb = xb.shape[0]
                total_loss += loss * mb
                total_correct += int((logits.argmax(axis=1) == yb).sum())
                scale = mb / bs
                if grads_acc is None:
                    grads_acc = {k: v * scale for k, v in grads.items()}
                else:
                    for k in grads_acc:
                        grads_acc[k] += grads[k] * scale
            opt.step(params, grads_acc)
        mean_loss = total_loss / n
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(epoch, f"mean loss {mean_loss}")
        # Accuracy is measured on the pre-update batches, the usual running
        # convention; a separate full pass per epoch would double eval cost.
        epoch_log.append(
            {"epoch": epoch, "train_loss": round(mean_loss, 6), "train_accuracy": round(total_correct / n, 6)}
        )
        if on_epoch is not None:
            on_epoch(epoch, params)
    return Checkpoint(spec=spec, train_config=cfg, params=params, epoch_log=epoch_log)


def predict_labels(params: dict, x: np.ndarray, spec: ModelSpec) -> np.ndarray:
    out = np.empty(x.shape[0], dtype=np.int64)
    for sl in _micro_slices(x.shape[0]):
        _, logits = forward(params, x[sl], spec)
        out[sl] = logits.argmax(axis=1)  # argmax ties break toward the lowest class
    return out


def evaluate(params: dict, dataset: SpriteDataset, spec: ModelSpec) -> dict:
    """Overall and per-class accuracy on a labeled dataset."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    x = prepare_inputs(dataset.images, spec.input_size)
    y = dataset.columns["label"].astype(np.int64)
    preds = predict_labels(params, x, spec)
    correct = preds == y
    per_class = {}
    for c in range(spec.n_classes):
        mask = y == c
        per_class[c] = float(correct[mask].mean()) if mask.any() else float("nan")
    return {"accuracy": float(correct.mean()), "per_class": per_class}


def extract_embeddings(params: dict, dataset: SpriteDataset, spec: ModelSpec):
    """Penultimate activations and raw logits for every sample, ids preserved.

    Returns (ids u64, embeddings (n,d) f32, logits (n,n_classes) f32).
    """
    x = prepare_inputs(dataset.images, spec.input_size)
    n = x.shape[0]
    emb = np.empty((n, spec.embedding_dim), dtype=x.dtype)
    logits = np.empty((n, spec.n_classes), dtype=x.dtype)
    for sl in _micro_slices(n):
        e, lg = forward(params, x[sl], spec)
        emb[sl] = e
        logits[sl] = lg
    return dataset.columns["id"].copy(), emb.astype(np.float32), logits.astype(np.float32)


def save_embeddings(path: str, ids: np.ndarray, embeddings: np.ndarray, logits: np.ndarray) -> None:
    write_midt(path, {"id": ids.astype(np.uint64), "embeddings": embeddings, "logits": logits})


def load_embeddings(path: str):
    entries = read_midt(path)
    for key in ("id", "embeddings", "logits"):
        if key not in entries:
            raise ValueError(f"embeddings file missing entry {key!r}")
    return entries["id"], entries["embeddings"], entries["logits"]
