"""Procedural facade images and house metadata for desk-scale experiments.

Condition is encoded as texture degradation: class A facades are smooth with
a regular window grid, class C facades carry crack strokes, stain blotches
and high-frequency noise, class B sits in between. Year of construction is
drawn per class (older houses are in worse condition) and the retained value
follows the regression model with the appraiser coefficients.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .dataset import BuildingRecord, ConditionCategory, ConditionClass, write_manifest
from .imaging import DEFAULT_SCALES, save_gray
from .regression import REFERENCE_SIGMA, REFERENCE_COEF
from .selection import DEFAULT_RELEVANCE_CLASSES

# mean year of construction per class, common spread
YEAR_MEANS = {ConditionClass.A: 1990.0, ConditionClass.B: 1975.0, ConditionClass.C: 1955.0}
YEAR_SD = 20.0
YEAR_RANGE = (1800, 2020)

# category frequencies within each class, training-partition image counts
CATEGORY_WEIGHTS = {
    ConditionClass.A: {ConditionCategory.c1: 2416, ConditionCategory.c2: 83},
    ConditionClass.B: {ConditionCategory.c3: 3212, ConditionCategory.c4: 121},
    ConditionClass.C: {ConditionCategory.c5: 1298, ConditionCategory.c6: 102, ConditionCategory.c7: 120,
                       ConditionCategory.c8: 2, ConditionCategory.c9: 13},
}

# (base, jitter) of the degradation level per class
DEGRADATION = {ConditionClass.A: (0.0, 0.15), ConditionClass.B: (0.4, 0.2), ConditionClass.C: (0.8, 0.2)}


def sample_year(cls: ConditionClass, rng: np.random.Generator) -> int:
    y = int(round(rng.normal(YEAR_MEANS[cls], YEAR_SD)))
    return int(np.clip(y, *YEAR_RANGE))


def retained_value(year: float, cls: ConditionClass, noise: float) -> float:
    b0, b_year, b_b, b_c = REFERENCE_COEF
    return b0 + b_year * year + b_b * (cls == ConditionClass.B) + b_c * (cls == ConditionClass.C) + noise


def simulate_regression_data(n: int, seed: int, class_probs: Sequence[float] = (376, 576, 391)):
    """Unclipped (year, class, retained value) draws from the appraiser model.

    Class proportions default to the unique test houses per class.
    """
    rng = np.random.default_rng(seed)
    p = np.asarray(class_probs, dtype=float)
    p /= p.sum()
    classes = [ConditionClass(int(c)) for c in rng.choice(3, size=n, p=p)]
    years = [sample_year(c, rng) for c in classes]
    noise = rng.normal(0.0, REFERENCE_SIGMA, size=n)
    values = [retained_value(y, c, e) for y, c, e in zip(years, classes, noise)]
    return years, classes, values


# ---------------------------------------------------------------- rendering

def _smooth_noise(rng, shape, sigma):
    return ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")


def _draw_rect(img, y0, x0, y1, x1, value):
    h, w = img.shape
    y0, x0 = max(0, int(y0)), max(0, int(x0))
    y1, x1 = min(h, int(y1)), min(w, int(x1))
    if y1 > y0 and x1 > x0:
        img[y0:y1, x0:x1] = value


def _crack(img, mask, rng, length, depth):
    h, w = img.shape
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return
    i = rng.integers(ys.size)
    y, x = float(ys[i]), float(xs[i])
    angle = rng.uniform(0, 2 * np.pi)
    for _ in range(int(length)):
        angle += rng.normal(0, 0.35)
        y += np.sin(angle)
        x += np.cos(angle)
        yi, xi = int(round(y)), int(round(x))
        if not (0 <= yi < h and 0 <= xi < w) or not mask[yi, xi]:
            break
        img[yi, xi] -= depth
        if rng.random() < 0.5 and xi + 1 < w:
            img[yi, xi + 1] -= 0.6 * depth


def render_facade(cls: ConditionClass, size: int, rng: np.random.Generator) -> np.ndarray:
    """One grayscale facade photograph of side ``size``."""
    s = size
    base, jitter = DEGRADATION[cls]
    level = float(np.clip(base + rng.uniform(0.0, jitter), 0.0, 1.0))

    img = np.empty((s, s))
    sky_h = int(s * rng.uniform(0.08, 0.2))
    ground_y = int(s * rng.uniform(0.85, 0.93))
    sky = np.linspace(0.92, 0.78, max(sky_h, 1))[:, None]
    img[:sky_h] = sky[:sky_h]

    facade = np.zeros((s, s), dtype=bool)
    facade[sky_h:ground_y] = True
    wall = rng.uniform(0.55, 0.7)
    img[facade] = wall
    img += facade * _smooth_noise(rng, (s, s), s / 16) * (0.03 + 0.05 * level)

    # roof line
    _draw_rect(img, sky_h, 0, sky_h + max(3, s // 40), s, wall - 0.3)

    # window grid, position jitter grows with degradation
    rows, cols = int(rng.integers(2, 4)), int(rng.integers(3, 5))
    top = sky_h + s // 12
    cell_h = (ground_y - top) / rows
    cell_w = s / cols
    win_h, win_w = 0.5 * cell_h, 0.45 * cell_w
    frame = max(2, s // 100)
    for r in range(rows):
        for c in range(cols):
            jy, jx = rng.normal(0, 1, 2) * level * s * 0.015
            y0 = top + r * cell_h + 0.2 * cell_h + jy
            x0 = c * cell_w + 0.275 * cell_w + jx
            _draw_rect(img, y0 - frame, x0 - frame, y0 + win_h + frame, x0 + win_w + frame, min(0.95, wall + 0.2))
            _draw_rect(img, y0, x0, y0 + win_h, x0 + win_w, rng.uniform(0.15, 0.25) + 0.1 * level * rng.random())
            if rng.random() > level:
                _draw_rect(img, y0 + win_h / 2 - frame / 2, x0, y0 + win_h / 2 + frame / 2, x0 + win_w, wall + 0.15)

    # ground strip
    img[ground_y:] = rng.uniform(0.3, 0.4) + 0.03 * rng.standard_normal((s - ground_y, s))

    # occasional tree
    if rng.random() < 0.3:
        cy, cx = rng.uniform(0.5, 0.8) * s, rng.choice([0.12, 0.88]) * s
        rad = rng.uniform(0.1, 0.18) * s
        yy, xx = np.mgrid[0:s, 0:s]
        blob = ((yy - cy) ** 2 + (xx - cx) ** 2 < rad ** 2) & (_smooth_noise(rng, (s, s), 2) > -0.2)
        img[blob] = 0.3 + 0.1 * _smooth_noise(rng, (s, s), 1)[blob] * 3

    # degradation: stains, cracks, fine noise on the facade only
    n_stains = rng.poisson(6 * level)
    yy, xx = np.mgrid[0:s, 0:s]
    for _ in range(n_stains):
        cy, cx = rng.uniform(sky_h, ground_y), rng.uniform(0, s)
        rad = rng.uniform(0.03, 0.08) * s
        img -= facade * 0.15 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad ** 2))
    for _ in range(rng.poisson(10 * level)):
        _crack(img, facade, rng, rng.uniform(0.15, 0.4) * s, rng.uniform(0.2, 0.35))
    img += facade * rng.standard_normal((s, s)) * (0.01 + 0.07 * level)
    return np.clip(img, 0.0, 1.0)


# ------------------------------------------------------------- house datasets

@dataclass(frozen=True)
class SynthSpec:
    counts: tuple[int, int, int] = (100, 100, 100)
    image_size: int = 256
    seed: int = 0
    images_per_house: int = 1


def synth_generate(out_dir: str | os.PathLike, counts: Sequence[int] = (100, 100, 100), image_size: int = 256,
                   seed: int = 0, images_per_house: int = 1, manifest_name: str = "manifest.json") -> list[BuildingRecord]:
    """Write facade PNGs under ``out_dir/images`` and a manifest; return the records."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 0:
        raise ValueError("counts must be three non-negative integers (A, B, C)")
    if image_size < 256:
        raise ValueError("image_size must be >= 256")
    if images_per_house < 1:
        raise ValueError("images_per_house must be >= 1")
    if sum(counts) == 0:
        return []
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    records = []
    idx = 0
    for cls, n in zip(ConditionClass, counts):
        cats = list(CATEGORY_WEIGHTS[cls])
        w = np.array([CATEGORY_WEIGHTS[cls][c] for c in cats], dtype=float)
        for _ in range(n):
            rng = np.random.default_rng([seed, idx])
            house_id = f"h{idx:05d}"
            category = cats[int(rng.choice(len(cats), p=w / w.sum()))]
            year = sample_year(cls, rng)
            value = float(np.clip(retained_value(year, cls, rng.normal(0.0, REFERENCE_SIGMA)), 0.0, 1.0))
            paths = []
            for j in range(images_per_house):
                rel = f"images/{house_id}_{j}.png"
                save_gray(os.path.join(out_dir, rel), render_facade(cls, image_size, rng))
                paths.append(rel)
            records.append(BuildingRecord(house_id, tuple(paths), category, year, round(value, 6)))
            idx += 1
    write_manifest(os.path.join(out_dir, manifest_name), records)
    return records


# ----------------------------------------------------- relevance patch sets

def _texture(name: str, side: int, rng: np.random.Generator) -> np.ndarray:
    s = side
    yy, xx = np.mgrid[0:s, 0:s] / s
    base = rng.uniform(0.35, 0.65)
    if name == "sky":
        img = np.linspace(rng.uniform(0.8, 0.95), rng.uniform(0.7, 0.85), s)[:, None] + 0.005 * rng.standard_normal((s, s))
    elif name == "asphalt":
        img = base - 0.1 + 0.08 * rng.standard_normal((s, s))
    elif name == "tree":
        img = base - 0.1 + 0.25 * _smooth_noise(rng, (s, s), 1.5)
    elif name == "bush":
        img = base - 0.15 + 0.25 * _smooth_noise(rng, (s, s), 3.0)
    elif name == "lawn":
        img = base + 0.15 * ndimage.gaussian_filter(rng.standard_normal((s, s)), (2.5, 0.5))
    elif name == "pole":
        img = np.full((s, s), base + 0.2)
        x0 = int(rng.uniform(0.3, 0.6) * s)
        img[:, x0:x0 + max(3, s // 10)] = base - 0.3
    elif name == "fence":
        period = rng.uniform(6, 12)
        img = base + 0.25 * np.sign(np.sin(2 * np.pi * xx * s / period))
    elif name == "road_marking":
        ang = rng.uniform(0.6, 1.0)
        img = base - 0.15 + 0.5 * (np.abs(np.sin(ang) * xx - np.cos(ang) * yy + rng.uniform(-0.2, 0.2)) < 0.06)
    elif name == "traffic_sign":
        r = rng.uniform(0.25, 0.4)
        d = np.hypot(yy - 0.5, xx - 0.5)
        img = np.where(d < r, 0.85, base) - 0.5 * ((d > r - 0.05) & (d < r))
    elif name == "car":
        img = np.full((s, s), base)
        body = (np.abs(yy - 0.5) < 0.15) & (np.abs(xx - 0.5) < 0.45)
        img[body] = base + 0.3
        for cx in (0.25, 0.75):
            img[np.hypot(yy - 0.68, xx - cx) < 0.1] = 0.05
    elif name == "person":
        img = np.full((s, s), base + 0.15)
        img[((yy - 0.6) / 0.35) ** 2 + ((xx - 0.5) / 0.12) ** 2 < 1] = base - 0.3
        img[np.hypot(yy - 0.18, xx - 0.5) < 0.08] = base - 0.3
    elif name == "clutter":
        img = np.full((s, s), base)
        for _ in range(6):
            y0, x0 = rng.integers(0, s, 2)
            _draw_rect(img, y0, x0, y0 + rng.integers(3, s // 3), x0 + rng.integers(3, s // 3), rng.random())
    else:
        raise ValueError(f"no texture generator for {name!r}")
    return np.clip(img, 0.0, 1.0)


def relevance_patches(n_per_class: int, side: int = 64, seed: int = 0,
                      classes: Sequence[str] = DEFAULT_RELEVANCE_CLASSES,
                      building_factor: int = 4) -> tuple[list[np.ndarray], list[int]]:
    """Labelled patch images: procedural clutter textures plus facade crops.

    The building class gets ``building_factor`` times as many samples, as
    building patterns dominate real selected-patch sets.
    """
    rng = np.random.default_rng([seed, 7])
    pixels, labels = [], []
    facade = None
    for label, name in enumerate(classes):
        count = n_per_class * (building_factor if name == "building" else 1)
        for i in range(count):
            if name == "building":
                # facade crops at the pipeline's patch scales, a fresh facade every few crops
                if facade is None or i % 3 == 0:
                    facade = render_facade(ConditionClass(int(rng.integers(3))), 256, rng)
                crop_side = int(rng.choice([sc for sc in DEFAULT_SCALES if sc <= 192]))
                top = int(0.2 * facade.shape[0])
                y = int(rng.integers(top, facade.shape[0] - crop_side + 1))
                x = int(rng.integers(0, facade.shape[1] - crop_side + 1))
                pixels.append(facade[y:y + crop_side, x:x + crop_side].copy())
            else:
                pixels.append(_texture(name, side, rng))
            labels.append(label)
    return pixels, labels


def write_relevance_set(out_dir: str | os.PathLike, n_per_class: int, side: int = 64, seed: int = 0,
                        classes: Sequence[str] = DEFAULT_RELEVANCE_CLASSES) -> str:
    """PNG patches plus ``index.csv`` (file,label). Returns the index path."""
    import csv

    os.makedirs(out_dir, exist_ok=True)
    pixels, labels = relevance_patches(n_per_class, side, seed, classes)
    index = os.path.join(out_dir, "index.csv")
    with open(index, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "label"])
        for i, (pix, lab) in enumerate(zip(pixels, labels)):
            name = f"p{i:05d}_{classes[lab]}.png"
            save_gray(os.path.join(out_dir, name), pix)
            w.writerow([name, classes[lab]])
    return index
