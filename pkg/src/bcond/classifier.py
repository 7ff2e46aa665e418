"""Patch-level condition classifier.

The shipped model is a multinomial logistic regression over the 128-d
normalized descriptor, trained with mini-batch SGD (momentum + L2 weight
decay). Any object implementing :class:`PatchClassifier` can replace it in
the aggregation stage.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .dataset import CLASSES, ConditionClass
from .descriptor import DESCRIPTOR_SIZE, PatchRecord, describe_pixels
from .imaging import resize_bilinear

log = logging.getLogger(__name__)

MAGIC = b"BCND"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
MODES = ("descriptor", "pixels")
CONDITION_CLASSES = tuple(c.name for c in CLASSES)


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


class MissingPixelsError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    seed: int = 0
    # learning-rate decay per epoch: lr / (1 + lr_decay * epoch); off by default
    lr_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0 or self.lr_decay < 0:
            raise ValueError("weight_decay and lr_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class PatchClassifier(Protocol):
    classes: tuple[str, ...]

    def predict_proba(self, patches: Sequence[PatchRecord]) -> np.ndarray:
        """(n, n_classes) likelihoods, rows summing to 1."""


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def patch_features(patches: Sequence[PatchRecord], mode: str) -> np.ndarray:
    if mode == "descriptor":
        rows = [p.descriptor.values for p in patches]
    elif mode == "pixels":
        rows = []
        for p in patches:
            if p.pixels is None:
                raise MissingPixelsError(f"patch {p.spec.key} has no pixels; model mode is 'pixels'")
            rows.append(describe_pixels(p.pixels).values)
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    if not rows:
        return np.zeros((0, DESCRIPTOR_SIZE))
    return np.vstack(rows)


@dataclass(frozen=True, eq=False)
class SoftmaxModel:
    """Linear scores ``W x + b`` followed by softmax."""

    weights: np.ndarray
    bias: np.ndarray
    mode: str = "descriptor"
    classes: tuple[str, ...] = CONDITION_CLASSES
    loss_trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights/bias shape mismatch")
        if len(self.classes) != self.weights.shape[0]:
            raise ValueError("class list does not match weight rows")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.scores(np.atleast_2d(features)))

    def predict_proba(self, patches: Sequence[PatchRecord]) -> np.ndarray:
        if not patches:
            return np.zeros((0, self.n_classes))
        return self.predict_features(patch_features(patches, self.mode))


def zero_model(n_classes: int = 3, dim: int = DESCRIPTOR_SIZE, mode: str = "descriptor",
               classes: Sequence[str] | None = None) -> SoftmaxModel:
    classes = tuple(classes) if classes is not None else default_class_names(n_classes)
    return SoftmaxModel(np.zeros((n_classes, dim)), np.zeros(n_classes), mode, classes)


def predict(model: PatchClassifier, patch: PatchRecord) -> np.ndarray:
    """Class likelihoods of one patch (ordered as ``model.classes``)."""
    return model.predict_proba([patch])[0]


# ---------------------------------------------------------------- augmentation

def augment(patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random flip / crop-and-rescale / brightness / contrast, each with p=0.5.

    Draw order is fixed (gate, then parameters, per operation) so that a
    seeded generator reproduces the same result.
    """
    out = np.array(patch, dtype=np.float64)
    side_h, side_w = out.shape
    if rng.random() < 0.5:
        out = out[:, ::-1]
    if rng.random() < 0.5:
        ch, cw = max(1, round(0.9 * side_h)), max(1, round(0.9 * side_w))
        y0 = int(rng.integers(0, side_h - ch + 1))
        x0 = int(rng.integers(0, side_w - cw + 1))
        out = resize_bilinear(out[y0:y0 + ch, x0:x0 + cw], side_h, side_w)
    if rng.random() < 0.5:
        out = np.clip(out + rng.uniform(-0.1, 0.1), 0.0, 1.0)
    if rng.random() < 0.5:
        mean = out.mean()
        out = np.clip((out - mean) * rng.uniform(0.9, 1.1) + mean, 0.0, 1.0)
    return np.ascontiguousarray(out)


def augmented_copies(patches: Sequence[PatchRecord], labels: Sequence[int], factor: int,
                     rng: np.random.Generator) -> tuple[list[PatchRecord], list[int]]:
    """Originals followed by ``factor - 1`` augmented copies of each patch."""
    if factor < 1:
        raise ValueError("augment_factor must be >= 1")
    out_p, out_y = list(patches), list(labels)
    if factor == 1:
        return out_p, out_y
    for p, y in zip(patches, labels):
        if p.pixels is None:
            raise MissingPixelsError(f"augmentation needs pixels for patch {p.spec.key}")
        for _ in range(factor - 1):
            pix = augment(p.pixels, rng)
            out_p.append(PatchRecord(p.spec, describe_pixels(pix), pix))
            out_y.append(y)
    return out_p, out_y


# -------------------------------------------------------------------- training

def loss_and_grad(weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. weights and bias."""
    n = x.shape[0]
    with np.errstate(invalid="ignore", over="ignore"):
        p = softmax(x @ weights.T + bias)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    p[np.arange(n), y] -= 1.0
    p /= n
    return loss, p.T @ x, p.sum(axis=0)


def fit_softmax(x: np.ndarray, y: np.ndarray, n_classes: int, config: TrainConfig):
    """Mini-batch SGD with momentum and weight decay from zero weights.

    Update: ``v <- m v - lr (g + wd w); w <- w + v``. Weight decay is not
    applied to the bias. Returns weights, bias and the per-epoch mean loss.
    """
    n, dim = x.shape
    w = np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    rng = np.random.default_rng(config.seed)
    trace = []
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, gw, gb = loss_and_grad(w, b, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {bi + 1}")
            total += loss * len(idx)
            vw = config.momentum * vw - lr * (gw + config.weight_decay * w)
            vb = config.momentum * vb - lr * gb
            w = w + vw
            b = b + vb
        trace.append(total / n)
        log.debug("epoch %d loss %.6f", epoch + 1, trace[-1])
    return w, b, trace


def train(patches: Sequence[PatchRecord], labels: Sequence, config: TrainConfig = TrainConfig(),
          augment_factor: int = 1, mode: str = "descriptor") -> SoftmaxModel:
    """Train the reference condition model on labelled patches.

    ``labels`` are ConditionClass values (or "A"/"B"/"C"). The returned model
    carries the per-epoch loss in ``loss_trace``.
    """
    y = np.array([int(ConditionClass.parse(l)) for l in labels], dtype=np.int64)
    if len(y) != len(patches):
        raise ValueError("patches and labels differ in length")
    missing = [c.name for c in CLASSES if not np.any(y == int(c))]
    if missing:
        raise TrainingError(f"training data lacks class(es) {', '.join(missing)}")
    rng = np.random.default_rng(config.seed)
    pts, ys = augmented_copies(patches, y.tolist(), augment_factor, rng)
    x = patch_features(pts, mode)
    w, b, trace = fit_softmax(x, np.asarray(ys, dtype=np.int64), len(CLASSES), config)
    return SoftmaxModel(w, b, mode, CONDITION_CLASSES, tuple(trace))


# ----------------------------------------------------------------- model files

def default_class_names(n_classes: int) -> tuple[str, ...]:
    if n_classes == len(CONDITION_CLASSES):
        return CONDITION_CLASSES
    from .selection import DEFAULT_RELEVANCE_CLASSES
    if n_classes == len(DEFAULT_RELEVANCE_CLASSES):
        return DEFAULT_RELEVANCE_CLASSES
    return tuple(f"class{i}" for i in range(n_classes))


def save_model(model: SoftmaxModel, path: str | os.PathLike) -> None:
    """Little-endian: magic, u16 version, u8 mode, u8 class count, f64 weights then bias."""
    if model.weights.shape[1] != DESCRIPTOR_SIZE:
        raise ModelFormatError(f"model files hold {DESCRIPTOR_SIZE}-d models, got {model.weights.shape[1]}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, MODES.index(model.mode), model.n_classes)
    params = np.concatenate([model.weights.ravel(), model.bias]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header + params.tobytes())


def load_model(path: str | os.PathLike, classes: Sequence[str] | None = None) -> SoftmaxModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, mode, n_classes = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}, not a model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: model format version {version}, expected {FORMAT_VERSION}")
    if mode >= len(MODES) or n_classes < 2:
        raise ModelFormatError(f"{path}: invalid header (mode {mode}, classes {n_classes})")
    expected = _HEADER.size + 8 * n_classes * (DESCRIPTOR_SIZE + 1)
    if len(data) != expected:
        raise ModelFormatError(f"{path}: expected {expected} bytes, found {len(data)} (truncated or corrupt)")
    params = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    w = params[:n_classes * DESCRIPTOR_SIZE].reshape(n_classes, DESCRIPTOR_SIZE).copy()
    b = params[n_classes * DESCRIPTOR_SIZE:].copy()
    names = tuple(classes) if classes is not None else default_class_names(n_classes)
    if len(names) != n_classes:
        raise ModelFormatError(f"{path}: {n_classes} classes in file, {len(names)} names given")
    return SoftmaxModel(w, b, MODES[mode], names)
