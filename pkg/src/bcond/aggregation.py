"""Building-level verdicts from patch likelihoods (majority vote or mean likelihood)."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classifier import PatchClassifier
from .dataset import CLASSES, ConditionClass
from .descriptor import PatchRecord
from .selection import SelectionConfig, select_pipeline

AMBIGUITY_THRESHOLD = 0.25
METHODS = ("MV", "LH")
UNDECIDABLE = "undecidable"
# guards the >= boundary against representation error in top1 - top2
_BOUNDARY_EPS = 1e-12
_TIE_EPS = 1e-12


def _as_matrix(preds) -> np.ndarray:
    arr = np.asarray(preds, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, len(CLASSES))
    return np.atleast_2d(arr)


def margins(preds) -> np.ndarray:
    """top1 - top2 per likelihood vector."""
    p = np.sort(_as_matrix(preds), axis=1)
    if p.shape[0] == 0:
        return np.zeros(0)
    return p[:, -1] - p[:, -2]


def unambiguous_mask(preds, threshold: float = AMBIGUITY_THRESHOLD) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return margins(preds) >= threshold - _BOUNDARY_EPS


def ambiguity_filter(preds, threshold: float = AMBIGUITY_THRESHOLD) -> np.ndarray:
    """Drop vectors whose top two likelihoods differ by less than ``threshold``."""
    p = _as_matrix(preds)
    return p[unambiguous_mask(p, threshold)]


def _worst_of(candidates: Iterable[int]) -> int:
    return max(candidates)


def majority_vote(preds) -> ConditionClass | None:
    """Most frequent per-patch argmax; None (undecidable) for an empty list.

    Vote ties go to the tied class with the larger summed likelihood, then
    to the worse class.
    """
    p = _as_matrix(preds)
    if p.shape[0] == 0:
        return None
    votes = np.bincount(p.argmax(axis=1), minlength=p.shape[1])
    tied = np.flatnonzero(votes == votes.max())
    if len(tied) > 1:
        sums = p.sum(axis=0)[tied]
        tied = tied[sums >= sums.max() - _TIE_EPS]
    return ConditionClass(_worst_of(tied.tolist()))


def average_likelihood(preds) -> tuple[ConditionClass | None, np.ndarray | None]:
    """Elementwise mean vector and its argmax (ties to the worse class)."""
    p = _as_matrix(preds)
    if p.shape[0] == 0:
        return None, None
    mean = p.mean(axis=0)
    tied = np.flatnonzero(mean >= mean.max() - _TIE_EPS)
    return ConditionClass(_worst_of(tied.tolist())), mean


@dataclass(frozen=True, eq=False)
class BuildingPrediction:
    image_id: str
    verdict: ConditionClass | None
    method: str
    n_patches_used: int
    aggregate_likelihoods: np.ndarray | None = None
    max_patch_likelihood: float = float("nan")
    patches: tuple[PatchRecord, ...] = field(default=(), repr=False)
    patch_likelihoods: np.ndarray | None = field(default=None, repr=False)

    @property
    def verdict_label(self) -> str:
        return UNDECIDABLE if self.verdict is None else self.verdict.name


def aggregate(image_id: str, likelihoods, method: str = "MV",
              threshold: float = AMBIGUITY_THRESHOLD, patches: Sequence[PatchRecord] = ()) -> BuildingPrediction:
    """Ambiguity-filter patch likelihoods and aggregate them with MV or LH."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    p = _as_matrix(likelihoods)
    mask = unambiguous_mask(p, threshold)
    kept = p[mask]
    if kept.shape[0] == 0:
        verdict, agg = None, None
    elif method == "MV":
        verdict, agg = majority_vote(kept), None
    else:
        verdict, agg = average_likelihood(kept)
    max_lh = float(kept.max()) if kept.size else float("nan")
    return BuildingPrediction(image_id, verdict, method, int(kept.shape[0]), agg, max_lh,
                              tuple(patches), p)


def patch_likelihoods(image: np.ndarray, config: SelectionConfig, model: PatchClassifier,
                      image_id: str = "", relevance_model: PatchClassifier | None = None):
    """Selected patches of an image and their condition likelihoods."""
    patches = select_pipeline(image, config, image_id, relevance_model)
    return patches, model.predict_proba(patches)


def predict_building(image: np.ndarray, config: SelectionConfig, model: PatchClassifier, method: str = "MV",
                     image_id: str = "", relevance_model: PatchClassifier | None = None,
                     threshold: float = AMBIGUITY_THRESHOLD) -> BuildingPrediction:
    patches, probs = patch_likelihoods(image, config, model, image_id, relevance_model)
    return aggregate(image_id, probs, method, threshold, patches)


REPORT_HEADER = ["image_id", "method", "verdict", "n_patches_used", "p_A", "p_B", "p_C", "max_patch_likelihood"]


def report_row(pred: BuildingPrediction) -> list:
    if pred.aggregate_likelihoods is not None:
        probs = [repr(float(v)) for v in pred.aggregate_likelihoods]
    else:
        probs = ["", "", ""]
    max_lh = "" if np.isnan(pred.max_patch_likelihood) else repr(pred.max_patch_likelihood)
    return [pred.image_id, pred.method, pred.verdict_label, pred.n_patches_used, *probs, max_lh]


def write_report(path: str | os.PathLike, predictions: Iterable[BuildingPrediction], preamble: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for pred in predictions:
            w.writerow(report_row(pred))


def read_report(path: str | os.PathLike) -> list[dict]:
    """Rows of a prediction report; '#' preamble lines are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    for row in rows:
        row["n_patches_used"] = int(row["n_patches_used"])
    return rows
