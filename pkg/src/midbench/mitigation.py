"""Cluster triage, retrain-set assembly, L1-regularized last-layer
retraining, and group metrics (worst-group and prevalence-weighted mean
accuracy).
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .layers import softmax
from .sampling import N_GROUPS

TAG_RETRAIN = "retrain"
TAG_ACCEPTABLE = "acceptable_uncertainty"
TAG_MISLABELS = "mislabels"
VALID_TAGS = (TAG_RETRAIN, TAG_ACCEPTABLE, TAG_MISLABELS)

DEFAULT_L1_GRID = (1.0, 0.7, 0.3, 0.1, 0.07, 0.03, 0.01)


@dataclass(frozen=True)
class RetrainConfig:
    l1_grid: tuple = DEFAULT_L1_GRID
    n_repeats: int = 10
    majority_mix_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not self.l1_grid or any(v <= 0 for v in self.l1_grid):
            raise ValueError("l1_grid must be non-empty with positive strengths")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if not 0.0 <= self.majority_mix_fraction <= 1.0:
            raise ValueError("majority_mix_fraction must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "l1_grid": list(self.l1_grid),
            "n_repeats": self.n_repeats,
            "majority_mix_fraction": self.majority_mix_fraction,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RetrainConfig":
        return cls(
            l1_grid=tuple(float(v) for v in d["l1_grid"]),
            n_repeats=int(d["n_repeats"]),
            majority_mix_fraction=float(d["majority_mix_fraction"]),
            rng_seed=int(d["rng_seed"]),
        )


@dataclass
class TriageDecision:
    tags: dict[int, str]  # cluster index -> tag
    source: str           # "headless" | "interactive" | "auto"

    def retrain_clusters(self) -> list[int]:
        return sorted(c for c, t in self.tags.items() if t == TAG_RETRAIN)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "decisions": [{"cluster": c, "tag": t} for c, t in sorted(self.tags.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TriageDecision":
        return cls(
            tags={int(row["cluster"]): row["tag"] for row in d["decisions"]},
            source=d["source"],
        )


def triage_clusters(k: int, decisions: dict[int, str] | None = None, composition: list[dict] | None = None,
                    source: str = "headless") -> TriageDecision:
    """Record explicit per-cluster tags, or apply the evaluation-only auto
    policy: Retrain for clusters whose members are majority minority-group,
    falling back to the single highest-minority-fraction cluster so at least
    one cluster is tagged Retrain."""
    if decisions is not None:
        tags = {int(c): t for c, t in decisions.items()}
        missing = [c for c in range(k) if c not in tags]
        if missing:
            raise ValueError(f"missing triage tag for clusters {missing}")
        unknown = [c for c in tags if not 0 <= c < k]
        if unknown:
            raise ValueError(f"triage tags for unknown clusters {unknown}")
        bad = [t for t in tags.values() if t not in VALID_TAGS]
        if bad:
            raise ValueError(f"invalid tags {bad}")
        if not any(t == TAG_RETRAIN for t in tags.values()):
            raise ValueError("at least one cluster must be tagged retrain")
        return TriageDecision(tags=tags, source=source)

    if composition is None:
        raise ValueError("auto triage needs a composition table")
    fractions = {int(c["cluster"]): float(c["minority_fraction"]) for c in composition}
    if set(fractions) != set(range(k)):
        raise ValueError("composition table does not cover every cluster")
    tags = {c: (TAG_RETRAIN if f > 0.5 else TAG_ACCEPTABLE) for c, f in fractions.items()}
    if not any(t == TAG_RETRAIN for t in tags.values()):
        best = max(sorted(fractions), key=lambda c: fractions[c])
        tags[best] = TAG_RETRAIN
    return TriageDecision(tags=tags, source="auto")


@dataclass
class RetrainSplit:
    tune_ids: np.ndarray
    fit_ids: np.ndarray
    retrain_ids: np.ndarray  # Retrain-cluster members (post-dispute)
    mix_ids: np.ndarray      # extra uniformly drawn training points


def _balance_classes(ids: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Downsample every class to the smallest class count, preserving order."""
    present = np.unique(labels)
    n_min = min(int((labels == c).sum()) for c in present)
    keep = np.zeros(len(ids), dtype=bool)
    for c in present:
        idx = np.nonzero(labels == c)[0]
        chosen = rng.choice(idx, size=n_min, replace=False) if len(idx) > n_min else idx
        keep[chosen] = True
    return ids[keep]


def assemble_retrain_set(
    kept_ids: np.ndarray,
    cluster_ids: np.ndarray,
    cluster_labels: np.ndarray,
    decision: TriageDecision,
    all_train_ids: np.ndarray,
    id_to_label: dict[int, int],
    majority_mix_fraction: float,
    seed: int,
) -> RetrainSplit:
    """Retrain-cluster samples plus a majority mix, split 50/50 with class
    balancing inside each half.

    cluster_ids/cluster_labels describe the clustered (intercept) samples;
    kept_ids are those surviving dispute filtering.
    """
    retrain_clusters = set(decision.retrain_clusters())
    kept = set(int(i) for i in kept_ids)
    retrain_ids = np.array(
        sorted(int(i) for i, c in zip(cluster_ids, cluster_labels) if int(c) in retrain_clusters and int(i) in kept),
        dtype=np.uint64,
    )
    if len(retrain_ids) < 2:
        raise ValueError(f"need >= 2 samples in retrain clusters, have {len(retrain_ids)}")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 300)))
    n_mix = math.ceil(majority_mix_fraction * len(retrain_ids))
    pool = np.setdiff1d(all_train_ids.astype(np.uint64), retrain_ids)
    n_mix = min(n_mix, len(pool))
    mix_ids = np.sort(rng.choice(pool, size=n_mix, replace=False)) if n_mix else np.array([], dtype=np.uint64)

    combined = np.concatenate([retrain_ids, mix_ids])
    perm = rng.permutation(len(combined))
    shuffled = combined[perm]
    half = len(shuffled) // 2
    tune_ids, fit_ids = shuffled[:half], shuffled[half:]

    halves = []
    for ids in (tune_ids, fit_ids):
        labels = np.array([id_to_label[int(i)] for i in ids])
        if len(np.unique(labels)) < 2:
            raise ValueError("a retrain half contains a single class; logistic regression undefined")
        halves.append(_balance_classes(ids, labels, rng))
    return RetrainSplit(tune_ids=halves[0], fit_ids=halves[1], retrain_ids=retrain_ids, mix_ids=mix_ids)


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _ce_loss_grad(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray):
    n = x.shape[0]
    logits = x @ w.T + b
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float((logsumexp - z[np.arange(n), y]).mean())
    p = softmax(logits)
    p[np.arange(n), y] -= 1.0
    p /= n
    return loss, p.T @ x, p.sum(axis=0)


def fit_l1_logreg(
    x: np.ndarray, y: np.ndarray, strength: float, tol: float = 1e-6, max_iter: int = 5000,
    n_classes: int | None = None,
):
    """Multiclass softmax regression with an L1 penalty on the weights.

    Minimizes mean cross-entropy + strength * ||W||_1 by proximal gradient
    (ISTA) with backtracking line search; the bias is unpenalized. Returns
    (W, b, info) where info reports convergence and the final objective.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("single-class input: logistic regression undefined")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    d = x.shape[1]
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)

    step = 1.0
    loss, gw, gb = _ce_loss_grad(w, b, x, y)
    objective = loss + strength * np.abs(w).sum()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # Backtracking: shrink the step until the smooth part is majorized.
        while True:
            w_new = soft_threshold(w - step * gw, step * strength)
            b_new = b - step * gb
            loss_new, gw_new, gb_new = _ce_loss_grad(w_new, b_new, x, y)
            dw, db_ = w_new - w, b_new - b
            quad = loss + (gw * dw).sum() + (gb * db_).sum() + ((dw * dw).sum() + (db_ * db_).sum()) / (2 * step)
            if loss_new <= quad + 1e-12:
                break
            step *= 0.5
            if step < 1e-12:
                break
        w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
        new_objective = loss + strength * np.abs(w).sum()
        if abs(objective - new_objective) <= tol:
            objective = new_objective
            converged = True
            break
        objective = new_objective
        step = min(step * 2.0, 1e6)  # allow recovery after conservative steps
    info = {"converged": converged, "iterations": iterations, "objective": float(objective)}
    return w, b, info


def l1_objective(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray, strength: float) -> float:
    loss, _, _ = _ce_loss_grad(np.asarray(w, float), np.asarray(b, float), np.asarray(x, float), y)
    return loss + strength * float(np.abs(w).sum())


def logreg_accuracy(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(((x @ w.T + b).argmax(axis=1) == y).mean())


def tune_l1_strength(tune_x, tune_y, fit_x, fit_y, grid=DEFAULT_L1_GRID) -> float:
    """Fit on fit half, score on tune half; ties resolve to the larger
    strength (sparser solution)."""
    if len(grid) == 0:
        raise ValueError("empty grid")
    best_strength, best_acc = None, -1.0
    for strength in sorted(grid, reverse=True):
        w, b, _ = fit_l1_logreg(fit_x, fit_y, strength)
        acc = logreg_accuracy(w, b, tune_x, tune_y)
        if acc > best_acc:
            best_strength, best_acc = strength, acc
    return float(best_strength)


@dataclass
class RetrainedClassifier:
    weights: np.ndarray  # (n_classes, d) acting on standardized embeddings
    bias: np.ndarray
    mu: np.ndarray       # standardization statistics of the full retrain set
    sigma: np.ndarray
    strength: float
    n_repeats: int

    def fold(self) -> tuple[np.ndarray, np.ndarray]:
        """Equivalent (W, b) acting on raw embeddings: W(e-mu)/sigma + b."""
        w_raw = self.weights / self.sigma[None, :]
        b_raw = self.bias - w_raw @ self.mu
        return w_raw, b_raw


class RepeatFailed(RuntimeError):
    def __init__(self, repeat: int, message: str):
        super().__init__(f"retrain repeat {repeat} failed: {message}")
        self.repeat = repeat


def standardize_stats(x: np.ndarray):
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    return mu, sigma


def retrain_last_layer(
    embeddings: np.ndarray,
    labels: np.ndarray,
    strength: float,
    cfg: RetrainConfig,
) -> RetrainedClassifier:
    """n_repeats L1 fits on independent random 50% subsets; weights and
    biases are element-wise averaged. Standardization uses one set of
    statistics computed on the full retrain set."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    mu, sigma = standardize_stats(x)
    xs = (x - mu) / sigma
    n = x.shape[0]
    n_classes = int(y.max()) + 1
    subset = max(2, n // 2)
    w_sum, b_sum = None, None
    for rep in range(cfg.n_repeats):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, 400, rep)))
        idx = rng.choice(n, size=subset, replace=False)
        try:
            w, b, _ = fit_l1_logreg(xs[idx], y[idx], strength, n_classes=n_classes)
        except ValueError as e:
            raise RepeatFailed(rep, str(e)) from e
        w_sum = w if w_sum is None else w_sum + w
        b_sum = b if b_sum is None else b_sum + b
    return RetrainedClassifier(
        weights=w_sum / cfg.n_repeats,
        bias=b_sum / cfg.n_repeats,
        mu=mu,
        sigma=sigma,
        strength=strength,
        n_repeats=cfg.n_repeats,
    )


def apply_retrained_classifier(params: dict, clf: RetrainedClassifier) -> dict:
    """Replace the checkpoint's classifier layer; the encoder is untouched.
    The standardization is folded exactly into the linear map."""
    w_raw, b_raw = clf.fold()
    new_params = dict(params)
    new_params["clf_w"] = w_raw.astype(params["clf_w"].dtype)
    new_params["clf_b"] = b_raw.astype(params["clf_b"].dtype)
    return new_params


@dataclass
class GroupMetricsReport:
    per_group: list[dict]            # {group, label, spurious, n, accuracy}
    worst_group_accuracy: float
    weighted_mean_accuracy: float
    prevalences: dict[int, float]    # training-set weights, summing to 1
    schema_version: int = 1
    config_digest: str = ""

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "config_digest": self.config_digest,
            "prevalences": {str(g): self.prevalences[g] for g in sorted(self.prevalences)},
            "per_group": self.per_group,
            "worst_group_accuracy": self.worst_group_accuracy,
            "weighted_mean_accuracy": self.weighted_mean_accuracy,
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroupMetricsReport":
        d = json.loads(text)
        return cls(
            per_group=d["per_group"],
            worst_group_accuracy=d["worst_group_accuracy"],
            weighted_mean_accuracy=d["weighted_mean_accuracy"],
            prevalences={int(g): v for g, v in d["prevalences"].items()},
            schema_version=d["schema_version"],
            config_digest=d["config_digest"],
        )


def training_prevalences(train_groups: np.ndarray) -> dict[int, float]:
    n = len(train_groups)
    return {g: float((train_groups == g).sum()) / n for g in range(N_GROUPS)}


def group_metrics(
    predictions: np.ndarray,
    labels: np.ndarray,
    groups: np.ndarray,
    prevalences: dict[int, float],
    config_digest: str = "",
) -> GroupMetricsReport:
    """Per-group accuracy, worst-group accuracy, prevalence-weighted mean."""
    per_group = []
    accuracies = {}
    for g in sorted(prevalences):
        mask = groups == g
        n_g = int(mask.sum())
        if n_g == 0:
            raise ValueError(f"empty test group {g}")
        acc = float((predictions[mask] == labels[mask]).mean())
        accuracies[g] = acc
        per_group.append(
            {"group": int(g), "label": int(g) // 3, "spurious": int(g) % 3, "n": n_g, "accuracy": round(acc, 6)}
        )
    wga = min(accuracies.values())
    weighted = sum(prevalences[g] * accuracies[g] for g in prevalences)
    return GroupMetricsReport(
        per_group=per_group,
        worst_group_accuracy=round(wga, 6),
        weighted_mean_accuracy=round(float(weighted), 6),
        prevalences={g: round(v, 6) for g, v in prevalences.items()},
        config_digest=config_digest,
    )


def ingest_group_manifest(path: str) -> dict:
    """Read a JSONL manifest of per-sample (id, y, s); return group counts,
    class totals, prevalences, and conditional frequencies P(Y=y|S=s)."""
    counts: dict[tuple[int, int], int] = {}
    n = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                y, s = int(row["y"]), int(row["s"])
                if "id" not in row:
                    raise KeyError("id")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"malformed manifest row at line {lineno}: {e}") from e
            counts[(y, s)] = counts.get((y, s), 0) + 1
            n += 1
    if n == 0:
        raise ValueError("empty manifest")
    class_totals: dict[int, int] = {}
    s_totals: dict[int, int] = {}
    for (y, s), c in counts.items():
        class_totals[y] = class_totals.get(y, 0) + c
        s_totals[s] = s_totals.get(s, 0) + c
    conditional = {
        f"P(y={y}|s={s})": counts.get((y, s), 0) / s_totals[s]
        for y in sorted(class_totals)
        for s in sorted(s_totals)
    }
    return {
        "n_samples": n,
        "group_counts": {f"({y},{s})": c for (y, s), c in sorted(counts.items())},
        "class_totals": dict(sorted(class_totals.items())),
        "prevalences": {f"({y},{s})": c / n for (y, s), c in sorted(counts.items())},
        "conditional": conditional,
    }
