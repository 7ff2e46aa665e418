"""Confusion matrices, accuracy, zero-rule baseline, correlation and exemplar ranking."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import CLASSES, ConditionClass

N = len(CLASSES)


class MetricError(ValueError):
    pass


def _classes(labels) -> np.ndarray:
    return np.array([int(ConditionClass.parse(l)) for l in labels], dtype=np.int64)


def confuse(truth: Sequence, pred: Sequence) -> np.ndarray:
    """3x3 counts, rows = true class, columns = predicted class."""
    if len(truth) != len(pred):
        raise MetricError(f"length mismatch: {len(truth)} truths vs {len(pred)} predictions")
    t, p = _classes(truth), _classes(pred)
    m = np.zeros((N, N), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    return m


def accuracy(m) -> float:
    m = np.asarray(m)
    total = m.sum()
    if total <= 0:
        raise MetricError("accuracy of an empty confusion matrix")
    return float(np.trace(m) / total)


def zero_rule(labels: Sequence) -> float:
    """Accuracy of always predicting the most frequent class."""
    if len(labels) == 0:
        raise MetricError("zero rule of an empty label list")
    counts = np.bincount(_classes(labels), minlength=N)
    return float(counts.max() / counts.sum())


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise MetricError("pearson needs two equal-length sequences of at least 2 values")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise MetricError("correlation undefined for constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def ordinal(labels: Iterable) -> list[int]:
    """A, B, C -> 1, 2, 3."""
    return [int(ConditionClass.parse(l)) + 1 for l in labels]


# ------------------------------------------------------------- exemplar lists

@dataclass(frozen=True)
class PatchOutcome:
    patch_id: str
    truth: ConditionClass
    likelihoods: tuple[float, ...]

    @property
    def predicted(self) -> ConditionClass:
        return ConditionClass(int(np.argmax(self.likelihoods)))

    @property
    def top(self) -> float:
        return max(self.likelihoods)

    @property
    def margin(self) -> float:
        s = sorted(self.likelihoods)
        return s[-1] - s[-2]


@dataclass
class Exemplars:
    confident: dict = field(default_factory=lambda: {c: [] for c in CLASSES})
    ambiguous: list = field(default_factory=list)
    non_neighbor: list = field(default_factory=list)


def confidence_rank(outcomes: Sequence[PatchOutcome], threshold: float = 0.99,
                    n_ambiguous: int | None = None) -> Exemplars:
    """Confident correct patches per class, most ambiguous patches, and
    confident A<->C confusions. Lists are sorted most-telling first."""
    ex = Exemplars()
    for o in outcomes:
        if o.top > threshold:
            if o.predicted == o.truth:
                ex.confident[o.truth].append(o)
            elif abs(int(o.predicted) - int(o.truth)) == 2:
                ex.non_neighbor.append(o)
    for c in CLASSES:
        ex.confident[c].sort(key=lambda o: -o.top)
    ex.non_neighbor.sort(key=lambda o: -o.top)
    ranked = sorted(range(len(outcomes)), key=lambda i: (outcomes[i].margin, i))
    if n_ambiguous is not None:
        ranked = ranked[:n_ambiguous]
    ex.ambiguous = [outcomes[i] for i in ranked]
    return ex


# ------------------------------------------------------------------- reports

def metrics_report(truth: Sequence, mv: Sequence, lh: Sequence, ages: Sequence[float] | None = None) -> dict:
    """Metrics JSON payload. ``mv``/``lh`` entries may be None for undecidable images.

    Undecidable images are left out of the confusion matrices and counted in
    ``n_undecidable`` (per method).
    """
    out = {}
    for name, pred in (("mv", mv), ("lh", lh)):
        keep = [i for i, p in enumerate(pred) if p is not None]
        m = confuse([truth[i] for i in keep], [pred[i] for i in keep])
        out[f"confusion_{name}"] = m.tolist()
        out[f"accuracy_{name}"] = accuracy(m) if m.sum() else None
        out[f"n_undecidable_{name}"] = len(pred) - len(keep)
    out["n_undecidable"] = out["n_undecidable_mv"]
    out["n_images"] = len(truth)
    out["zero_rule"] = zero_rule(truth) if len(truth) else None
    out["pearson_age_condition"] = None
    if ages is not None:
        keep = [i for i, p in enumerate(mv) if p is not None]
        try:
            out["pearson_age_condition"] = pearson([ages[i] for i in keep], ordinal(mv[i] for i in keep))
        except MetricError:
            pass
    return out


def discount_bars(values: Sequence[float | None], truth: Sequence, mv: Sequence, lh: Sequence) -> list[dict]:
    """Mean retained value per class under the true, MV and LH labels."""
    rows = []
    for source, labels in (("true", truth), ("MV", mv), ("LH", lh)):
        for c in CLASSES:
            sel = [v for v, l in zip(values, labels)
                   if v is not None and l is not None and ConditionClass.parse(l) == c]
            rows.append({"source": source, "class": c.name, "n": len(sel),
                         "mean_retained_value": float(np.mean(sel)) if sel else None})
    return rows


def write_bars_csv(path: str | os.PathLike, rows: Sequence[dict], preamble: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=["source", "class", "n", "mean_retained_value"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mean_retained_value": "" if r["mean_retained_value"] is None else repr(r["mean_retained_value"])})
