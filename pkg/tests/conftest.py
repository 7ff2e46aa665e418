import math

import numpy as np
import pytest
from hypothesis import settings

from bcond.classifier import SoftmaxModel
from bcond.descriptor import N_BINS, N_CELLS, PatchRecord, describe_pixels
from bcond.imaging import PatchSpec

settings.register_profile("seeds100", max_examples=100, derandomize=True, deadline=None)
settings.load_profile("seeds100")

# acceptance criterion lines, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def brute_descriptor(magnitude, orientation, x, y, side):
    """Per-pixel re-accumulation of the 4x4x8 histogram, plain Python loops."""
    hist = [0.0] * (N_CELLS * N_CELLS * N_BINS)
    cell = side // N_CELLS
    width = 2.0 * math.pi / N_BINS
    for dy in range(side):
        for dx in range(side):
            r = min(dy // cell, N_CELLS - 1)
            c = min(dx // cell, N_CELLS - 1)
            o = float(orientation[y + dy, x + dx])
            b = min(int(math.floor(o / width)), N_BINS - 1)
            hist[(r * N_CELLS + c) * N_BINS + b] += float(magnitude[y + dy, x + dx])
    norm = math.sqrt(sum(v * v for v in hist))
    values = [v / norm for v in hist] if norm > 1e-12 else [0.0] * len(hist)
    return np.array(values), norm


def patch_from_pixels(pixels, image_id="p", keep=True):
    return PatchRecord(PatchSpec(image_id, 0, 0, pixels.shape[0]), describe_pixels(pixels),
                       pixels if keep else None)


def constant_model(n_classes, favoured, classes=None, score=10.0):
    """Zero-weight softmax model whose bias prefers one class."""
    bias = np.zeros(n_classes)
    bias[favoured] = score
    names = tuple(classes) if classes else tuple(f"c{i}" for i in range(n_classes))
    return SoftmaxModel(np.zeros((n_classes, 128)), bias, "descriptor", names)


def separable_blobs(rng, n_per_class, n_classes=3, spread=0.02, dim=128):
    """Unit-norm non-negative descriptor-like blobs, one centre per class."""
    centres = rng.random((n_classes, dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    x = np.vstack([np.abs(c + spread * rng.standard_normal((n_per_class, dim))) for c in centres])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = np.repeat(np.arange(n_classes), n_per_class)
    return x, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_chain(out, counts="10,10,10", seed=42, relevance_per_class=10, lr=0.5, workers=1):
    """synth -> extract -> train-relevance -> train-condition -> predict -> evaluate -> regress."""
    from bcond.cli import main

    out = str(out)
    common = ["--seed", str(seed), "--workers", str(workers), "--set", f"learning_rate={lr}"]
    steps = [
        ["synth", "--out", f"{out}/data", "--counts", counts, "--relevance-per-class", str(relevance_per_class)],
        ["train-relevance", "--out", f"{out}/rel", "--patches", f"{out}/data/relevance"],
        ["extract", "--out", f"{out}/ext", "--manifest", f"{out}/data/manifest.json",
         "--relevance-model", f"{out}/rel/relevance.bcnd"],
        ["train-condition", "--out", f"{out}/cond", "--patches", f"{out}/ext/patches.csv"],
        ["predict", "--out", f"{out}/pred", "--manifest", f"{out}/ext/splits.json",
         "--model", f"{out}/cond/condition.bcnd", "--patches", f"{out}/ext/patches.csv"],
        ["evaluate", "--out", f"{out}/eval", "--manifest", f"{out}/ext/splits.json",
         "--predictions", f"{out}/pred/predictions.csv"],
        ["regress", "--out", f"{out}/reg", "--manifest", f"{out}/ext/splits.json",
         "--predictions", f"{out}/pred/predictions.csv"],
    ]
    for step in steps:
        code = main(step + common)
        assert code == 0, f"step {step[0]} exited {code}"
    return out
