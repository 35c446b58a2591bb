"""k-means clustering (Lloyd's algorithm, k-means++ seeding) and
cluster-composition summaries against ground-truth groups."""

from dataclasses import dataclass

import numpy as np


@dataclass
class ClusterAssignment:
    k: int
    labels: np.ndarray     # per-sample cluster index
    centroids: np.ndarray  # (k, d)
    inertia: float
    seed: int

    def to_dict(self, ids: np.ndarray) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "inertia": self.inertia,
            "assignments": [
                {"id": int(i), "cluster": int(c)} for i, c in zip(ids, self.labels)
            ],
        }


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ centroids.T) + (centroids * centroids).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=x.dtype)
    centroids[0] = x[int(rng.integers(n))]
    d2 = _sq_dists(x, centroids[0:1]).ravel()
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = x[int(rng.integers(n))]
            continue
        probs = d2 / total
        centroids[i] = x[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, _sq_dists(x, centroids[i : i + 1]).ravel())
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    n, k = x.shape[0], centroids.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centroids)
        new_labels = d2.argmin(axis=1)
        # Reseed each emptied cluster with the point farthest from its
        # currently assigned centroid, one cluster at a time.
        for c in range(k):
            if not (new_labels == c).any():
                dist_own = d2[np.arange(n), new_labels]
                far = int(dist_own.argmax())
                new_labels[far] = c
                d2[far] = 0.0  # keep a later empty cluster from stealing it
        if (new_labels == labels).all():
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)
    d2 = _sq_dists(x, centroids)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centroids, inertia


def kmeans_fit(
    embeddings: np.ndarray,
    k: int,
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 1000,
    init: str = "k-means++",
) -> ClusterAssignment:
    """Best of n_init Lloyd runs by inertia; deterministic given seed."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty input")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    if init not in ("k-means++", "random"):
        raise ValueError(f"unknown init {init!r}")
    best = None
    for trial in range(n_init):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        if init == "k-means++":
            centroids = _kmeanspp_seed(x, k, rng)
        else:
            centroids = x[rng.choice(n, size=k, replace=False)].copy()
        labels, centroids, inertia = _lloyd(x, centroids.copy(), max_iter)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia)
    labels, centroids, inertia = best
    return ClusterAssignment(k=k, labels=labels, centroids=centroids, inertia=inertia, seed=seed)


def cluster_composition(assignment: ClusterAssignment, group_ids: np.ndarray, minority_mask: np.ndarray) -> list[dict]:
    """Per-cluster size, group counts, and minority fraction (evaluation only)."""
    out = []
    for c in range(assignment.k):
        mask = assignment.labels == c
        size = int(mask.sum())
        groups, counts = np.unique(group_ids[mask], return_counts=True)
        out.append(
            {
                "cluster": c,
                "size": size,
                "group_counts": {int(g): int(n) for g, n in zip(groups, counts)},
                "minority_fraction": float(minority_mask[mask].mean()) if size else 0.0,
            }
        )
    return out


def sweep_k(
    embeddings: np.ndarray,
    k_range,
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 1000,
    group_ids: np.ndarray | None = None,
    minority_mask: np.ndarray | None = None,
) -> list[dict]:
    """Fit k-means for each k; attach composition tables when ground-truth
    groups are supplied (evaluation runs only)."""
    k_list = list(k_range)
    if not k_list:
        raise ValueError("k_range is empty")
    results = []
    for k in k_list:
        assignment = kmeans_fit(embeddings, k, seed=seed, n_init=n_init, max_iter=max_iter)
        entry = {"k": k, "assignment": assignment, "composition": None}
        if group_ids is not None and minority_mask is not None:
            entry["composition"] = cluster_composition(assignment, group_ids, minority_mask)
        results.append(entry)
    return results


def adjusted_rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """ARI from the pair-counting contingency table."""
    if labels_a.shape != labels_b.shape:
        raise ValueError("label arrays differ in length")
    n = labels_a.size
    ua, ia = np.unique(labels_a, return_inverse=True)
    ub, ib = np.unique(labels_b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    total = comb2(np.array([n]))[0]
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
