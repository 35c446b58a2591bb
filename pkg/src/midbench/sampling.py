"""Biased dataset sampling: label-segment correlation at a configurable level.

A bias level b replaces lfloor b*n rfloor of an otherwise uniform draw with
samples whose x-position segment is forced to the canonical pairing
(Square -> Left, Oval -> Middle, Heart -> Right). Labels are the shape.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .midt import read_midt, write_midt
from .sprites import (
    CANONICAL_SEGMENT,
    N_ORIENTATIONS,
    N_POSITIONS,
    N_SCALES,
    SEGMENT_INDICES,
    LatentPoint,
    Shape,
    render_sprite,
    spurious_attribute_of,
)

N_CLASSES = 3
N_GROUPS = 9

COLUMN_NAMES = (
    "id",
    "shape",
    "label",
    "scale_idx",
    "orientation_idx",
    "pos_x_idx",
    "pos_y_idx",
    "spurious",
    "group",
)


def group_flat(label: int, spurious: int) -> int:
    """Flat id for the group pair (label, spurious)."""
    return int(label) * 3 + int(spurious)


def effective_shortcut_fraction(b: float) -> float:
    """Expected fraction of samples satisfying the label-segment pairing."""
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"bias level {b} outside [0, 1]")
    return b + (1.0 - b) / 3.0


@dataclass(frozen=True)
class BiasConfig:
    bias_level: float
    n_samples: int
    rng_seed: int

    def __post_init__(self):
        if not 0.0 <= self.bias_level <= 1.0:
            raise ValueError(f"bias_level {self.bias_level} outside [0, 1]")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")


@dataclass
class SpriteDataset:
    """Columnar dataset: images plus per-sample latent and group columns."""

    images: np.ndarray  # (n, 64, 64) uint8 in {0, 1}
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        n = self.images.shape[0]
        for name in COLUMN_NAMES:
            if name not in self.columns:
                raise ValueError(f"missing column {name}")
            if self.columns[name].shape != (n,):
                raise ValueError(f"column {name} length mismatch")

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices: np.ndarray) -> "SpriteDataset":
        return SpriteDataset(
            images=self.images[indices],
            columns={k: v[indices] for k, v in self.columns.items()},
        )

    def manifest_records(self):
        cols = self.columns
        for i in range(len(self)):
            yield {
                "id": int(cols["id"][i]),
                "shape": int(cols["shape"][i]),
                "scale_idx": int(cols["scale_idx"][i]),
                "orientation_idx": int(cols["orientation_idx"][i]),
                "pos_x_idx": int(cols["pos_x_idx"][i]),
                "pos_y_idx": int(cols["pos_y_idx"][i]),
                "label": int(cols["label"][i]),
                "spurious": int(cols["spurious"][i]),
                "group": [int(cols["label"][i]), int(cols["spurious"][i])],
            }

    def save(self, directory: str, stem: str = "dataset") -> None:
        os.makedirs(directory, exist_ok=True)
        # Images are binary, so they travel bit-packed (8 pixels per byte);
        # the trailing axis length is kept alongside for exact unpacking.
        packed = np.packbits(self.images, axis=-1)
        entries = {
            "images_packed": packed,
            "images_width": np.array([self.images.shape[-1]], dtype=np.uint64),
        }
        entries.update({name: self.columns[name] for name in COLUMN_NAMES})
        write_midt(os.path.join(directory, f"{stem}.midt"), entries)
        manifest_path = os.path.join(directory, f"{stem}.jsonl")
        tmp = manifest_path + ".tmp"
        with open(tmp, "w") as fh:
            for record in self.manifest_records():
                fh.write(json.dumps(record) + "\n")
        os.replace(tmp, manifest_path)

    @classmethod
    def load(cls, directory: str, stem: str = "dataset") -> "SpriteDataset":
        entries = read_midt(os.path.join(directory, f"{stem}.midt"))
        packed = entries.pop("images_packed")
        width = int(entries.pop("images_width")[0])
        images = np.unpackbits(packed, axis=-1, count=width).astype(np.uint8)
        return cls(images=images, columns=entries)


def _draw_sample(rng: np.random.Generator, biased: bool) -> LatentPoint:
    shape = Shape(int(rng.integers(N_CLASSES)))
    scale_idx = int(rng.integers(N_SCALES))
    orientation_idx = int(rng.integers(N_ORIENTATIONS))
    pos_y_idx = int(rng.integers(N_POSITIONS))
    if biased:
        segment = CANONICAL_SEGMENT[shape]
        pos_x_idx = int(rng.choice(SEGMENT_INDICES[segment]))
    else:
        pos_x_idx = int(rng.integers(N_POSITIONS))
    return LatentPoint(shape, scale_idx, orientation_idx, pos_x_idx, pos_y_idx)


def sample_unfair(cfg: BiasConfig) -> SpriteDataset:
    """Draw a biased dataset. Deterministic given cfg; per-sample RNG streams
    keyed by (seed, id) so generation order cannot affect the result."""
    n = cfg.n_samples
    n_biased = math.floor(cfg.bias_level * n)

    images = np.zeros((n, 64, 64), dtype=np.uint8)
    cols = {name: np.zeros(n, dtype=np.uint64 if name == "id" else np.uint8) for name in COLUMN_NAMES}

    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 0, i)))
        latents = _draw_sample(rng, biased=i < n_biased)
        images[i] = render_sprite(latents)
        spurious = spurious_attribute_of(latents.pos_x_idx)
        cols["id"][i] = i
        cols["shape"][i] = int(latents.shape)
        cols["label"][i] = int(latents.shape)
        cols["scale_idx"][i] = latents.scale_idx
        cols["orientation_idx"][i] = latents.orientation_idx
        cols["pos_x_idx"][i] = latents.pos_x_idx
        cols["pos_y_idx"][i] = latents.pos_y_idx
        cols["spurious"][i] = int(spurious)
        cols["group"][i] = group_flat(int(latents.shape), int(spurious))

    perm = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 1))).permutation(n)
    return SpriteDataset(images=images[perm], columns={k: v[perm] for k, v in cols.items()})


def inject_label_flips(ds: SpriteDataset, fraction: float, seed: int) -> SpriteDataset:
    """Return a copy with lfloor fraction*n rfloor labels flipped to a wrong class.

    The generative shape column is untouched, so flipped samples are exactly
    those where label != shape; groups are recomputed from the flipped label.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    n = len(ds)
    n_flip = math.floor(fraction * n)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    flip_idx = rng.choice(n, size=n_flip, replace=False)

    columns = {k: v.copy() for k, v in ds.columns.items()}
    offsets = rng.integers(1, N_CLASSES, size=n_flip)
    columns["label"][flip_idx] = (columns["label"][flip_idx] + offsets) % N_CLASSES
    columns["group"] = (columns["label"].astype(np.int64) * 3 + columns["spurious"].astype(np.int64)).astype(np.uint8)
    return SpriteDataset(images=ds.images.copy(), columns=columns)
