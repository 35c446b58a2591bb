"""Logit ranking, max/intercept window selection, representational
similarity matrices, and 2D projection of embeddings.

The intercept window is the core selection device: samples whose class logit
sits near zero (or near the runner-up logit) rather than at the extremes.
"""

from dataclasses import dataclass

import numpy as np

INTERCEPT_MODES = ("absolute_zero", "margin_zero")
DEFAULT_WINDOW_FRACTION = 0.05
WINDOW_CAP = 2000


@dataclass(frozen=True)
class LogitRanking:
    class_index: int
    ids: np.ndarray      # sample ids, descending by logit, ties by id
    values: np.ndarray   # the class logits in the same order


@dataclass
class InterceptSelection:
    m: int
    mode: str
    per_class: dict[int, np.ndarray]
    selected: np.ndarray  # deduplicated union, ascending by id

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "mode": self.mode,
            "per_class": {str(c): [int(i) for i in ids] for c, ids in self.per_class.items()},
            "selected": [int(i) for i in self.selected],
        }


def default_window_size(n_samples: int) -> int:
    """Per-class window: 5% of the dataset, capped at 2000, at least 1."""
    return max(1, min(WINDOW_CAP, int(DEFAULT_WINDOW_FRACTION * n_samples)))


def rank_logits(ids: np.ndarray, logits: np.ndarray, class_index: int) -> LogitRanking:
    """Order samples by the chosen class's logit, descending; ties by id."""
    if logits.shape[0] == 0:
        raise ValueError("empty records")
    if not 0 <= class_index < logits.shape[1]:
        raise ValueError(f"class_index {class_index} out of range")
    vals = logits[:, class_index]
    order = np.lexsort((ids, -vals.astype(np.float64)))
    return LogitRanking(class_index=class_index, ids=ids[order], values=vals[order])


def select_max_window(ranking: LogitRanking, m: int) -> np.ndarray:
    """Top-m ids by logit; clamps to the dataset size."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return ranking.ids[:m].copy()


def select_intercept_window(
    ids: np.ndarray, logits: np.ndarray, class_index: int, m: int, mode: str = "absolute_zero"
) -> np.ndarray:
    """The m ids whose class logit is nearest zero (absolute_zero) or nearest
    the best other class's logit (margin_zero). Ties break by sample id."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if mode not in INTERCEPT_MODES:
        raise ValueError(f"unknown intercept mode {mode!r}")
    if not 0 <= class_index < logits.shape[1]:
        raise ValueError(f"class_index {class_index} out of range")
    c = logits[:, class_index].astype(np.float64)
    if mode == "absolute_zero":
        key = np.abs(c)
    else:
        others = np.delete(logits, class_index, axis=1).astype(np.float64)
        key = np.abs(c - others.max(axis=1))
    order = np.lexsort((ids, key))
    return ids[order[:m]].copy()


def intercept_selection(
    ids: np.ndarray, logits: np.ndarray, m: int | None = None, mode: str = "absolute_zero"
) -> InterceptSelection:
    """Per-class intercept windows and their deduplicated union."""
    n, n_classes = logits.shape
    m_eff = default_window_size(n) if m is None else m
    per_class = {c: select_intercept_window(ids, logits, c, m_eff, mode) for c in range(n_classes)}
    union = np.unique(np.concatenate(list(per_class.values())))
    return InterceptSelection(m=m_eff, mode=mode, per_class=per_class, selected=union)


def cosine_rsm(embeddings: np.ndarray, ids: np.ndarray, sort_values: np.ndarray, sort_key: str):
    """Cosine similarity matrix with rows/cols ordered by sort_values then id.

    Returns (matrix, ordered ids, order indices). Zero-norm embeddings are
    rejected with the offending id.
    """
    if embeddings.shape[0] < 2:
        raise ValueError("need at least 2 embeddings")
    norms = np.linalg.norm(embeddings, axis=1)
    bad = np.nonzero(norms == 0)[0]
    if bad.size:
        raise ValueError(f"zero-norm embedding for id {int(ids[bad[0]])}")
    order = np.lexsort((ids, sort_values))
    unit = embeddings[order] / norms[order][:, None]
    matrix = np.clip(unit @ unit.T, -1.0, 1.0)
    return matrix.astype(np.float32), ids[order], order


def block_contrast(matrix: np.ndarray, block_sizes: list[int]) -> float:
    """Mean within-block similarity (diagonal excluded) minus mean
    between-block similarity, for contiguous blocks of the given sizes."""
    n = matrix.shape[0]
    if any(s <= 0 for s in block_sizes):
        raise ValueError("degenerate partition: empty block")
    if sum(block_sizes) != n:
        raise ValueError(f"block sizes sum to {sum(block_sizes)}, matrix has {n} rows")
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    within = matrix[same & off_diag]
    between = matrix[~same]
    if within.size == 0 or between.size == 0:
        raise ValueError("partition leaves no within- or between-block pairs")
    return float(within.mean() - between.mean())


def blocks_from_sorted_values(sorted_values: np.ndarray) -> list[int]:
    """Run lengths of equal consecutive values in an already-sorted array."""
    _, counts = np.unique(sorted_values, return_counts=True)
    return [int(c) for c in counts]


def pca2d(embeddings: np.ndarray) -> np.ndarray:
    """Project onto the top-2 principal components of the mean-centered
    matrix; component sign fixed so its largest-magnitude loading is positive."""
    if embeddings.shape[0] < 2:
        raise ValueError("need at least 2 embeddings")
    x = embeddings.astype(np.float64)
    x = x - x.mean(axis=0, keepdims=True)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[0] <= 1e-12:
        raise ValueError("rank-deficient input: all embeddings identical")
    comps = vt[:2].copy()
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros_like(comps[0])])
    for i in range(2):
        j = int(np.abs(comps[i]).argmax())
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return x @ comps.T
