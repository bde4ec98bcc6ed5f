"""Order categorization with a windowed linear SVM, and batched pick lists.

Orders are featurized as normalized per-cluster line shares plus the total
line count.  A one-vs-rest linear SVM is trained by stochastic subgradient
descent on the regularized hinge loss (step schedule 1/(lambda t)); the
lowest-objective iterate is returned.  The training window is a FIFO buffer:
new samples push out the oldest and the model is retrained from warm-start
weights.

The parallelism limit couples back to the layout: a cart fits an aisle
``floor(a_i / cart_width)`` times, capped by the cart pool.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core.model import Layout, Order, SimParams, SlotAssignment
from .errors import DegenerateLabelsError, InfeasibleParallelismError, ValidationError
from .routing import PickingFrequency
from .slotting import Clustering

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrderFeatures:
    vector: Tuple[float, ...]     # k cluster shares + total line count
    k: int

    @property
    def cluster_block(self) -> Tuple[float, ...]:
        return self.vector[:self.k]

    @property
    def total_lines(self) -> float:
        return self.vector[self.k]


def featurize_order(order: Order, clustering: Clustering,
                    assignment: Optional[SlotAssignment] = None) -> OrderFeatures:
    """Cluster-share feature vector for one order.

    The slot assignment is accepted for interface symmetry with the other
    subsystems; features depend on the clustering only.
    """
    counts = [0.0] * clustering.k
    for pid, _ in order.lines:
        cluster = clustering.assignment.get(pid)
        if cluster is None:
            raise ValidationError(f"order {order.id}: product {pid} is not clustered")
        counts[cluster] += 1.0
    total = float(len(order.lines))
    shares = tuple(c / total for c in counts)
    return OrderFeatures(vector=shares + (total,), k=clustering.k)


def dominant_cluster_label(features: OrderFeatures) -> int:
    block = features.cluster_block
    return int(max(range(len(block)), key=lambda i: (block[i], -i)))


def bootstrap_labels(orders: Sequence[Order], clustering: Clustering) -> List[int]:
    """Self-supervised labels: each order's dominant cluster id."""
    return [dominant_cluster_label(featurize_order(o, clustering)) for o in orders]


@dataclass(frozen=True)
class TrainingSample:
    vector: Tuple[float, ...]
    label: int
    timestamp: float = 0.0


def _as_vector(sample) -> np.ndarray:
    if isinstance(sample, OrderFeatures):
        return np.asarray(sample.vector, dtype=float)
    return np.asarray(sample, dtype=float)


@dataclass
class SvmModel:
    labels: List[int]
    weights: np.ndarray           # shape (n_labels, dim)
    biases: np.ndarray            # shape (n_labels,)
    C: float
    epochs: int
    seed: int
    window_size: int = 0
    oldest_timestamp: float = 0.0
    newest_timestamp: float = 0.0
    updates: int = 0

    def decision_values(self, vector) -> np.ndarray:
        x = _as_vector(vector)
        return self.weights @ x + self.biases

    def predict(self, vector) -> int:
        scores = self.decision_values(vector)
        best = float(np.max(scores))
        for label, score in zip(self.labels, scores):
            if score == best:
                return label
        return self.labels[0]

    def accuracy(self, samples: Sequence[Tuple]) -> float:
        if not samples:
            return 1.0
        hits = sum(1 for x, y in samples if self.predict(x) == y)
        return hits / len(samples)

    def to_json(self) -> str:
        return json.dumps({
            "labels": self.labels,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "C": self.C,
            "epochs": self.epochs,
            "seed": self.seed,
            "window_size": self.window_size,
            "oldest_timestamp": self.oldest_timestamp,
            "newest_timestamp": self.newest_timestamp,
            "updates": self.updates,
        }, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SvmModel":
        d = json.loads(text)
        return SvmModel(
            labels=[int(v) for v in d["labels"]],
            weights=np.asarray(d["weights"], dtype=float),
            biases=np.asarray(d["biases"], dtype=float),
            C=float(d["C"]),
            epochs=int(d["epochs"]),
            seed=int(d["seed"]),
            window_size=int(d["window_size"]),
            oldest_timestamp=float(d["oldest_timestamp"]),
            newest_timestamp=float(d["newest_timestamp"]),
            updates=int(d["updates"]),
        )


def hinge_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """lam/2 (|w|^2 + b^2) + mean hinge; the bias rides as a constant feature."""
    margins = y * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * lam * (float(w @ w) + b * b) + float(np.mean(hinge))


def _train_one_vs_rest(X: np.ndarray, labels: np.ndarray, all_labels: List[int],
                       C: float, epochs: int, rng: np.random.Generator,
                       warm: Optional[Tuple[np.ndarray, np.ndarray]] = None):
    n, dim = X.shape
    lam = 1.0 / C   # independent of n: duplicating samples keeps the optimum
    Xa = np.hstack([X, np.ones((n, 1))])
    weights = np.zeros((len(all_labels), dim))
    biases = np.zeros(len(all_labels))
    if warm is not None:
        w0, b0 = warm
        weights[:w0.shape[0], :w0.shape[1]] = w0
        biases[:b0.size] = b0
    for li, label in enumerate(all_labels):
        y = np.where(labels == label, 1.0, -1.0)
        v = np.concatenate([weights[li], [biases[li]]])
        best_obj = hinge_objective(v[:-1], float(v[-1]), X, y, lam)
        best_v = v.copy()
        # a warm start begins one virtual epoch in, so the first 1/(lam*t)
        # step does not wipe the carried-over weights
        t = 0 if warm is None else n
        for _ in range(epochs):
            for idx in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                margin = y[idx] * float(v @ Xa[idx])
                v *= (1.0 - eta * lam)
                if margin < 1.0:
                    v += eta * y[idx] * Xa[idx]
            obj = hinge_objective(v[:-1], float(v[-1]), X, y, lam)
            if obj < best_obj:
                best_obj = obj
                best_v = v.copy()
        weights[li] = best_v[:-1]
        biases[li] = float(best_v[-1])
    return weights, biases


def svm_train(samples: Sequence[Tuple], C: float = 1.0, epochs: int = 60,
              seed: int = 0) -> SvmModel:
    """Train a one-vs-rest linear SVM on (features, label) pairs."""
    if C <= 0:
        raise ValidationError("C must be positive")
    if not samples:
        raise DegenerateLabelsError("no training samples")
    X = np.vstack([_as_vector(x) for x, _ in samples])
    labels = np.asarray([int(y) for _, y in samples])
    all_labels = sorted(set(int(y) for y in labels))
    if len(all_labels) < 2:
        raise DegenerateLabelsError(f"need >= 2 categories, got {all_labels}")
    rng = np.random.default_rng(seed)
    weights, biases = _train_one_vs_rest(X, labels, all_labels, C, epochs, rng)
    return SvmModel(labels=all_labels, weights=weights, biases=biases,
                    C=C, epochs=epochs, seed=seed)


def svm_update(model: SvmModel, window: Sequence[TrainingSample],
               new_batch: Sequence[TrainingSample],
               window_capacity: Optional[int] = None):
    """FIFO window update: append, evict oldest beyond capacity, warm retrain.

    Returns ``(model, window)`` unchanged when ``new_batch`` is empty.  A
    batch containing an unseen category expands the label set (logged).
    """
    if not new_batch:
        return model, list(window)
    capacity = window_capacity or model.window_size or (len(window) + len(new_batch))
    merged = list(window) + list(new_batch)
    merged = merged[-capacity:]

    labels_now = sorted({s.label for s in merged})
    unseen = [l for l in labels_now if l not in model.labels]
    if unseen:
        log.info("svm_update: expanding category set with %s", unseen)
    all_labels = sorted(set(model.labels) | set(labels_now))

    X = np.vstack([_as_vector(s.vector) for s in merged])
    y = np.asarray([s.label for s in merged])
    rng = np.random.default_rng(model.seed + model.updates + 1)

    # warm start: carry over rows for labels the old model already knew
    dim = X.shape[1]
    warm = None
    if model.weights.shape[1] == dim:
        w0 = np.zeros((len(all_labels), dim))
        b0 = np.zeros(len(all_labels))
        for li, label in enumerate(all_labels):
            if label in model.labels:
                old = model.labels.index(label)
                w0[li] = model.weights[old]
                b0[li] = model.biases[old]
        warm = (w0, b0)
    else:
        log.info("svm_update: feature dimension changed, cold restart")
    weights, biases = _train_one_vs_rest(X, y, all_labels, model.C, model.epochs,
                                         rng, warm=warm)
    timestamps = [s.timestamp for s in merged]
    updated = SvmModel(
        labels=all_labels, weights=weights, biases=biases,
        C=model.C, epochs=model.epochs, seed=model.seed,
        window_size=capacity,
        oldest_timestamp=min(timestamps),
        newest_timestamp=max(timestamps),
        updates=model.updates + 1,
    )
    return updated, merged


# -------------------------------------------------------------- pick lists --

@dataclass
class PickBatch:
    batch_id: int
    category: int
    order_ids: List[str]
    slots: List[str]             # merged slot visit set, sorted
    cart_index: int

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "category": self.category,
            "order_ids": list(self.order_ids),
            "slots": list(self.slots),
            "cart_index": self.cart_index,
        }


def parallelism_limit(layout: Layout, params: SimParams) -> int:
    """min(max_carts, narrowest-aisle cart capacity)."""
    per_aisle = min(int(math.floor(a / params.cart_width + 1e-9))
                    for a in layout.aisle_widths)
    return min(params.max_carts, per_aisle)


def build_picklists(orders: Sequence[Order], model: Optional[SvmModel],
                    clustering: Clustering, assignment: SlotAssignment,
                    rates: Optional[PickingFrequency], params: SimParams,
                    layout: Layout, batch_cap: int = 5) -> Tuple[List[PickBatch], List[int]]:
    """Classify orders, batch them per category, and sequence the batches.

    Returns the batches (already in dispatch order: categories ascending,
    formation order within a category) and the dispatch sequence of batch
    ids.  With ``model=None`` orders fall back to their dominant-cluster
    label.  Raises when no cart fits the narrowest aisle.
    """
    P = parallelism_limit(layout, params)
    if P < 1:
        raise InfeasibleParallelismError(
            f"cart width {params.cart_width} exceeds the narrowest aisle "
            f"({min(layout.aisle_widths)} m)"
        )
    if not orders:
        return [], []

    by_category: Dict[int, List[Order]] = {}
    for order in orders:
        features = featurize_order(order, clustering, assignment)
        category = model.predict(features) if model else dominant_cluster_label(features)
        by_category.setdefault(category, []).append(order)

    batches: List[PickBatch] = []
    for category in sorted(by_category):
        group = by_category[category]
        for start in range(0, len(group), batch_cap):
            chunk = group[start:start + batch_cap]
            slots = sorted({
                assignment.slot_of(pid) for o in chunk for pid, _ in o.lines
            })
            batches.append(PickBatch(
                batch_id=len(batches),
                category=category,
                order_ids=[o.id for o in chunk],
                slots=slots,
                cart_index=len(batches) % P,
            ))
    dispatch = [b.batch_id for b in batches]
    return batches, dispatch
