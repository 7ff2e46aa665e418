"""SIFT-style 4x4x8 gradient orientation histograms for square patches.

The histogram uses hard spatial and orientation binning. Both the raw
(contrast-carrying) norm and the L2-normalized values are kept: clustering
works on the normalized form, contrast filtering on the raw norm.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .imaging import GradientField, PatchSpec, check_contained, compute_gradients

N_CELLS = 4
N_BINS = 8
DESCRIPTOR_SIZE = N_CELLS * N_CELLS * N_BINS
BIN_WIDTH = 2.0 * math.pi / N_BINS
NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Descriptor:
    values: np.ndarray
    raw_norm: float


@dataclass(frozen=True, eq=False)
class PatchRecord:
    spec: PatchSpec
    descriptor: Descriptor
    pixels: np.ndarray | None = field(default=None, repr=False)

    @property
    def raw_norm(self) -> float:
        return self.descriptor.raw_norm


def cell_index(offsets: np.ndarray, side: int) -> np.ndarray:
    """Cell of each pixel offset; remainder pixels fall into the last cell."""
    cell = side // N_CELLS
    return np.minimum(offsets // cell, N_CELLS - 1)


def orientation_bin(orientation: np.ndarray) -> np.ndarray:
    return np.minimum((orientation // BIN_WIDTH).astype(np.int64), N_BINS - 1)


def histogram(magnitude: np.ndarray, orientation: np.ndarray) -> np.ndarray:
    """Accumulate a square magnitude/orientation region into the 128 bins.

    Bin layout: ``(cell_row * 4 + cell_col) * 8 + orientation_bin``.
    """
    side = magnitude.shape[0]
    if magnitude.shape != (side, side):
        raise ValueError("histogram expects a square region")
    if side < N_CELLS:
        raise ValueError(f"patch side {side} < {N_CELLS}: cells would be empty")
    cells = cell_index(np.arange(side), side)
    idx = (cells[:, None] * N_CELLS + cells[None, :]) * N_BINS + orientation_bin(orientation)
    return np.bincount(idx.ravel(), weights=magnitude.ravel(), minlength=DESCRIPTOR_SIZE)


def from_histogram(hist: np.ndarray) -> Descriptor:
    norm = float(np.sqrt(np.dot(hist, hist)))
    if norm > NORM_EPS:
        values = hist / norm
    else:
        values = np.zeros(DESCRIPTOR_SIZE)
    return Descriptor(values, norm)


def describe(grad: GradientField, spec: PatchSpec) -> Descriptor:
    check_contained(spec, grad.height, grad.width)
    if spec.side < N_CELLS:
        raise ValueError(f"patch side {spec.side} < {N_CELLS}: cells would be empty")
    rows = slice(spec.y, spec.y + spec.side)
    cols = slice(spec.x, spec.x + spec.side)
    return from_histogram(histogram(grad.magnitude[rows, cols], grad.orientation[rows, cols]))


def describe_pixels(pixels: np.ndarray) -> Descriptor:
    """Descriptor of a whole patch image, gradients computed on the patch alone."""
    side = pixels.shape[0]
    return describe(compute_gradients(pixels), PatchSpec("", 0, 0, side))


def raw_norm(d: Descriptor) -> float:
    return d.raw_norm


def stack(records: Sequence[PatchRecord]) -> np.ndarray:
    """(n, 128) matrix of normalized descriptor values."""
    if not records:
        return np.zeros((0, DESCRIPTOR_SIZE))
    return np.vstack([r.descriptor.values for r in records])


CSV_HEADER = ["image_id", "x", "y", "side", "raw_norm"] + [f"v{i}" for i in range(DESCRIPTOR_SIZE)]


def descriptor_row(rec: PatchRecord) -> list:
    s = rec.spec
    return [s.image_id, s.x, s.y, s.side, repr(rec.descriptor.raw_norm)] + [repr(float(v)) for v in rec.descriptor.values]


def write_descriptor_csv(path: str | os.PathLike, records: Iterable[PatchRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(descriptor_row(rec))


def record_from_row(row: dict) -> PatchRecord:
    spec = PatchSpec(row["image_id"], int(row["x"]), int(row["y"]), int(row["side"]))
    values = np.array([float(row[f"v{i}"]) for i in range(DESCRIPTOR_SIZE)])
    return PatchRecord(spec, Descriptor(values, float(row["raw_norm"])))


def read_descriptor_csv(path: str | os.PathLike) -> list[PatchRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [record_from_row(row) for row in csv.DictReader(line for line in fh if not line.startswith("#"))]
