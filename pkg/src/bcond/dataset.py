"""Dataset manifests, condition categories and house-level partitioning."""

from __future__ import annotations

import datetime
import enum
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ManifestError(ValueError):
    """Raised for malformed or invalid manifest content."""


class PartitionError(ValueError):
    pass


class ConditionCategory(enum.IntEnum):
    """Appraiser condition score, c1 (best) to c9 (worst)."""

    c1 = 1
    c2 = 2
    c3 = 3
    c4 = 4
    c5 = 5
    c6 = 6
    c7 = 7
    c8 = 8
    c9 = 9

    @classmethod
    def parse(cls, code: str) -> "ConditionCategory":
        try:
            return cls[code]
        except (KeyError, TypeError):
            raise ValueError(f"unrecognized condition category {code!r}") from None


class ConditionClass(enum.IntEnum):
    """Target class: A good, B normal, C needs repairs. Integer value is the column index."""

    A = 0
    B = 1
    C = 2

    @classmethod
    def parse(cls, label) -> "ConditionClass":
        if isinstance(label, ConditionClass):
            return label
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            try:
                return cls(int(label))
            except ValueError:
                raise ValueError(f"unrecognized condition class {label!r}") from None
        try:
            return cls[str(label).strip()]
        except KeyError:
            raise ValueError(f"unrecognized condition class {label!r}") from None


CLASSES: tuple[ConditionClass, ...] = tuple(ConditionClass)
SPLIT_NAMES = ("training", "validation", "test")

_CATEGORY_TO_CLASS = {
    ConditionCategory.c1: ConditionClass.A,
    ConditionCategory.c2: ConditionClass.A,
    ConditionCategory.c3: ConditionClass.B,
    ConditionCategory.c4: ConditionClass.B,
    ConditionCategory.c5: ConditionClass.C,
    ConditionCategory.c6: ConditionClass.C,
    ConditionCategory.c7: ConditionClass.C,
    ConditionCategory.c8: ConditionClass.C,
    ConditionCategory.c9: ConditionClass.C,
}


def map_category(category: ConditionCategory | str) -> ConditionClass:
    """Aggregate a c1..c9 category into its A/B/C target class."""
    if not isinstance(category, ConditionCategory):
        category = ConditionCategory.parse(category)
    return _CATEGORY_TO_CLASS[category]


@dataclass(frozen=True)
class BuildingRecord:
    house_id: str
    image_paths: tuple[str, ...]
    category: ConditionCategory
    year_built: int
    retained_value: float | None = None
    split: str | None = None

    def __post_init__(self):
        if not self.image_paths:
            raise ManifestError(f"house {self.house_id!r}: image list is empty")
        current = datetime.date.today().year
        if not 1500 <= self.year_built <= current:
            raise ManifestError(
                f"house {self.house_id!r}: year_built {self.year_built} outside [1500, {current}]"
            )
        if self.retained_value is not None:
            v = self.retained_value
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ManifestError(f"house {self.house_id!r}: retained_value {v} outside [0, 1]")
        if self.split is not None and self.split not in SPLIT_NAMES:
            raise ManifestError(f"house {self.house_id!r}: unknown split {self.split!r}")

    @property
    def condition(self) -> ConditionClass:
        return map_category(self.category)

    def to_json(self) -> dict:
        out = {
            "house_id": self.house_id,
            "images": list(self.image_paths),
            "category": self.category.name,
            "year_built": self.year_built,
        }
        if self.retained_value is not None:
            out["retained_value"] = self.retained_value
        if self.split is not None:
            out["split"] = self.split
        return out


@dataclass(frozen=True)
class DatasetSplit:
    training: list[BuildingRecord] = field(default_factory=list)
    validation: list[BuildingRecord] = field(default_factory=list)
    test: list[BuildingRecord] = field(default_factory=list)

    def items(self):
        return zip(SPLIT_NAMES, (self.training, self.validation, self.test))

    def labelled(self) -> list[BuildingRecord]:
        """All records, each tagged with the name of its split."""
        out = []
        for name, recs in self.items():
            out.extend(_with_split(r, name) for r in recs)
        return out


def _with_split(rec: BuildingRecord, split: str) -> BuildingRecord:
    return BuildingRecord(rec.house_id, rec.image_paths, rec.category,
                          rec.year_built, rec.retained_value, split)


_REQUIRED = ("house_id", "images", "category", "year_built")


def _record_from_json(obj, index: int) -> BuildingRecord:
    if not isinstance(obj, dict):
        raise ManifestError(f"record {index}: expected an object")
    for key in _REQUIRED:
        if key not in obj:
            raise ManifestError(f"record {index}: missing required field {key!r}")
    house_id = obj["house_id"]
    if not isinstance(house_id, str) or not house_id:
        raise ManifestError(f"record {index}: house_id must be a non-empty string")
    images = obj["images"]
    if not isinstance(images, list) or not all(isinstance(p, str) for p in images):
        raise ManifestError(f"house {house_id!r}: images must be an array of strings")
    try:
        category = ConditionCategory.parse(obj["category"])
    except ValueError as exc:
        raise ManifestError(f"house {house_id!r}: {exc}") from None
    year = obj["year_built"]
    if isinstance(year, bool) or not isinstance(year, int):
        raise ManifestError(f"house {house_id!r}: year_built must be an integer")
    retained = obj.get("retained_value")
    if retained is not None:
        if isinstance(retained, bool) or not isinstance(retained, (int, float)):
            raise ManifestError(f"house {house_id!r}: retained_value must be a number")
        retained = float(retained)
    return BuildingRecord(house_id, tuple(images), category, year, retained, obj.get("split"))


def parse_manifest(path: str | os.PathLike) -> list[BuildingRecord]:
    """Read a JSON manifest (top-level array of house objects)."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, list):
        raise ManifestError(f"{path}: top level must be an array")
    records = []
    seen = set()
    for i, obj in enumerate(data):
        rec = _record_from_json(obj, i)
        if rec.house_id in seen:
            raise ManifestError(f"house {rec.house_id!r}: duplicate house_id")
        seen.add(rec.house_id)
        records.append(rec)
    return records


def write_manifest(path: str | os.PathLike, records: Iterable[BuildingRecord]) -> None:
    payload = [r.to_json() for r in records]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _round_totals(targets: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of `targets` to integers summing to `total`."""
    base = np.floor(targets + 1e-9).astype(int)
    short = total - base.sum()
    order = sorted(range(len(targets)), key=lambda j: (-(targets[j] - base[j]), j))
    for j in order[:short]:
        base[j] += 1
    return base


def _controlled_round(table: np.ndarray, row_sums: np.ndarray, col_sums: np.ndarray) -> np.ndarray:
    """Round a class-by-split target table to floor/ceil entries with the given margins."""
    base = np.floor(table + 1e-9).astype(int)
    frac = table - base
    cells = [(i, j) for i in range(table.shape[0]) for j in range(table.shape[1]) if frac[i, j] > 1e-9]
    need_r = row_sums - base.sum(axis=1)
    need_c = col_sums - base.sum(axis=0)
    best, best_score = None, -1.0
    # at most 9 fractional cells, so exhaustive search is cheap
    for mask in itertools.product((0, 1), repeat=len(cells)):
        add = np.zeros_like(base)
        for (i, j), m in zip(cells, mask):
            add[i, j] = m
        if np.array_equal(add.sum(axis=1), need_r) and np.array_equal(add.sum(axis=0), need_c):
            score = sum(frac[c] for c, m in zip(cells, mask) if m)
            if score > best_score + 1e-12:
                best, best_score = add, score
    if best is None:
        raise PartitionError("could not allocate stratified split sizes")
    return base + best


def partition(records: Sequence[BuildingRecord], ratios=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Stratified random house-level split into training/validation/test.

    Per-class split sizes are within one house of ``ratio * count`` and the
    overall split sizes are the largest-remainder rounding of ``ratio * n``.
    """
    if not records:
        raise PartitionError("no records to partition")
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios <= 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise PartitionError(f"ratios must be three positive fractions summing to 1, got {ratios.tolist()}")
    ids = [r.house_id for r in records]
    if len(set(ids)) != len(ids):
        raise PartitionError("duplicate house_id in records")

    by_class = {c: sorted((r for r in records if r.condition == c), key=lambda r: r.house_id)
                for c in CLASSES}
    counts = np.array([len(by_class[c]) for c in CLASSES])
    for c, n in zip(CLASSES, counts):
        if 0 < n < len(ratios):
            raise PartitionError(
                f"class {c.name} has {n} house(s), fewer than the {len(ratios)} splits; "
                "add records or use a smaller split count"
            )
    table = counts[:, None] * ratios[None, :]
    col_sums = _round_totals(ratios * counts.sum(), int(counts.sum()))
    alloc = _controlled_round(table, counts, col_sums)

    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for ci, c in enumerate(CLASSES):
        members = by_class[c]
        order = rng.permutation(len(members))
        start = 0
        for s in range(3):
            take = alloc[ci, s]
            parts[s].extend(members[k] for k in order[start:start + take])
            start += take
    return DatasetSplit(*(sorted(p, key=lambda r: r.house_id) for p in parts))


def split_from_records(records: Sequence[BuildingRecord]) -> DatasetSplit:
    """Rebuild a DatasetSplit from records that carry a ``split`` tag."""
    parts = {name: [] for name in SPLIT_NAMES}
    for r in records:
        if r.split is None:
            raise ManifestError(f"house {r.house_id!r}: no split assigned")
        parts[r.split].append(r)
    return DatasetSplit(parts["training"], parts["validation"], parts["test"])
