"""Patch selection: per-image k-means, representatives, contrast and relevance filters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import PatchClassifier, SoftmaxModel, TrainConfig, TrainingError, fit_softmax, patch_features
from .descriptor import PatchRecord, describe, stack
from .imaging import (DEFAULT_SCALES, DEFAULT_STRIDE_FRACTION, MAX_SIDE, compute_gradients, crop,
                      dense_grid, downscale)

BUILDING_CLASS = "building"
DEFAULT_RELEVANCE_CLASSES = (
    "car", "tree", "person", "asphalt", "pole", "traffic_sign",
    "bush", "sky", "fence", "lawn", "road_marking", "clutter",
    BUILDING_CLASS,
)


@dataclass(frozen=True, eq=False)
class ClusterResult:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    k_requested: int
    n_iter: int
    inertia_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def initial_inertia(self) -> float:
        return self.inertia_trace[0]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    closest = ((x - x[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
        idx = min(idx, n - 1)
        # guard against landing on a zero-weight point through rounding
        while closest[idx] <= 0:
            idx = int(np.flatnonzero(closest > 0)[0])
        centers.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(1))
    return x[centers].copy()


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding.

    k is reduced to the number of distinct points when necessary. An empty
    cluster is re-seeded at the point farthest from its own centroid.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("kmeans needs a non-empty 2-d array of points")
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = np.unique(x, axis=0).shape[0]
    k_eff = min(k, n_distinct)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k_eff, rng)

    d = _sq_dists(x, centroids)
    labels = d.argmin(1)
    trace = [float(d[np.arange(len(x)), labels].sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centroids = _update(x, labels, centroids)
        d = _sq_dists(x, centroids)
        new_labels = d.argmin(1)
        trace.append(float(d[np.arange(len(x)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    inertia = float(((x - centroids[labels]) ** 2).sum())
    return ClusterResult(k_eff, centroids, labels, inertia, k, n_iter, tuple(trace))


def _update(x: np.ndarray, labels: np.ndarray, old: np.ndarray) -> np.ndarray:
    k = old.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(old)
    np.add.at(sums, labels, x)
    centroids = old.copy()
    full = counts > 0
    centroids[full] = sums[full] / counts[full][:, None]
    empty = np.flatnonzero(~full)
    if empty.size:
        far = ((x - centroids[labels]) ** 2).sum(1)
        for j in empty:
            i = int(far.argmax())
            centroids[j] = x[i]
            far[i] = -1.0
    return centroids


def select_representatives(patches: Sequence[PatchRecord], clustering: ClusterResult,
                           points: np.ndarray | None = None) -> list[PatchRecord]:
    """Member nearest to each non-empty cluster's centroid, in cluster order."""
    x = stack(patches) if points is None else np.asarray(points, dtype=np.float64)
    if len(patches) != len(clustering.assignment) or len(x) != len(patches):
        raise ValueError("clustering does not match the patch list")
    reps = []
    for j in range(clustering.k):
        members = np.flatnonzero(clustering.assignment == j)
        if members.size == 0:
            continue
        dist = np.sqrt(((x[members] - clustering.centroids[j]) ** 2).sum(1))
        reps.append(patches[int(members[int(dist.argmin())])])
    return reps


def top_count(n: int, t: float) -> int:
    return min(n, int(math.ceil(t * n - 1e-9)))


def contrast_filter(reps: Sequence[PatchRecord], t: float) -> list[PatchRecord]:
    """Keep the ceil(t n) largest-raw-norm patches, never a zero-norm one.

    Ties go to the lower index; survivors keep their input order.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"t must be in (0, 1], got {t}")
    if not reps:
        return []
    m = top_count(len(reps), t)
    ranked = sorted(range(len(reps)), key=lambda i: (-reps[i].raw_norm, i))[:m]
    keep = sorted(i for i in ranked if reps[i].raw_norm > 0.0)
    return [reps[i] for i in keep]


# ------------------------------------------------------------------ relevance

def train_relevance(patches: Sequence[PatchRecord], labels: Sequence[int], config: TrainConfig = TrainConfig(),
                    classes: Sequence[str] = DEFAULT_RELEVANCE_CLASSES, mode: str = "descriptor") -> SoftmaxModel:
    """Logistic-regression relevance model over ``len(classes)`` patch classes."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise TrainingError("no labelled patches")
    if len(y) != len(patches):
        raise ValueError("patches and labels differ in length")
    if y.min() < 0 or y.max() >= len(classes):
        raise ValueError(f"labels must lie in 0..{len(classes) - 1}")
    if np.unique(y).size < 2:
        raise TrainingError("relevance training needs at least two classes")
    x = patch_features(patches, mode)
    w, b, trace = fit_softmax(x, y, len(classes), config)
    return SoftmaxModel(w, b, mode, tuple(classes), tuple(trace))


def relevance_filter(patches: Sequence[PatchRecord], model: PatchClassifier,
                     building_class: str = BUILDING_CLASS) -> list[PatchRecord]:
    """Keep patches whose most likely class is the building class."""
    if not patches:
        return []
    target = list(model.classes).index(building_class)
    probs = model.predict_proba(patches)
    return [p for p, row in zip(patches, probs) if int(row.argmax()) == target]


# ------------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class SelectionConfig:
    scales: tuple[int, ...] = DEFAULT_SCALES
    stride_fraction: float = DEFAULT_STRIDE_FRACTION
    k: int = 50
    t: float = 0.21
    seed: int = 0
    max_side: int | None = MAX_SIDE
    keep_pixels: bool = False


def describe_grid(image: np.ndarray, config: SelectionConfig, image_id: str = "") -> list[PatchRecord]:
    grad = compute_gradients(image)
    h, w = image.shape
    out = []
    for spec in dense_grid(w, h, config.scales, config.stride_fraction, image_id):
        pixels = crop(image, spec) if config.keep_pixels else None
        out.append(PatchRecord(spec, describe(grad, spec), pixels))
    return out


def select_pipeline(image: np.ndarray, config: SelectionConfig = SelectionConfig(), image_id: str = "",
                    relevance_model: PatchClassifier | None = None, trace: dict | None = None) -> list[PatchRecord]:
    """Dense grid -> describe -> k-means -> representatives -> contrast -> relevance.

    ``trace``, when given, receives the intermediate patch lists by stage name.
    """
    if config.max_side is not None:
        image = downscale(image, config.max_side)
    patches = describe_grid(image, config, image_id)
    stages = {"grid": patches}
    if patches:
        clustering = kmeans(stack(patches), config.k, config.seed)
        reps = select_representatives(patches, clustering)
    else:
        reps = []
    stages["representatives"] = reps
    kept = contrast_filter(reps, config.t)
    stages["contrast"] = kept
    if relevance_model is not None:
        kept = relevance_filter(kept, relevance_model)
    stages["relevance"] = kept
    if trace is not None:
        trace.update(stages)
    return kept
