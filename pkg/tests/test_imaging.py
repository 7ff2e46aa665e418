import math

import numpy as np
import pytest
from PIL import Image

from bcond.imaging import (BoundsError, ImageLoadError, ImageSizeError, PatchSpec, compute_gradients, crop,
                           dense_grid, downscale, load_gray, save_gray)


def _png(path, color, size=(2, 2), mode="RGB"):
    Image.new(mode, size, color).save(path)
    return path


def test_load_white(tmp_path):
    img = load_gray(_png(tmp_path / "w.png", (255, 255, 255)))
    assert img.shape == (2, 2)
    np.testing.assert_allclose(img, 1.0)


def test_load_red_luminance(tmp_path):
    img = load_gray(_png(tmp_path / "r.png", (255, 0, 0)))
    np.testing.assert_allclose(img, 0.299, atol=1e-12)


def test_load_jpeg(tmp_path):
    path = tmp_path / "g.jpg"
    Image.new("RGB", (8, 8), (128, 128, 128)).save(path, format="JPEG")
    np.testing.assert_allclose(load_gray(path), 128 / 255, atol=2 / 255)


def test_load_truncated(tmp_path):
    good = _png(tmp_path / "big.png", (10, 200, 30), size=(64, 64))
    data = good.read_bytes()
    bad = tmp_path / "bad.png"
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(ImageLoadError, match="bad.png"):
        load_gray(bad)


def test_load_downscales_long_side(tmp_path):
    path = tmp_path / "wide.png"
    save_gray(path, np.full((30, 60), 0.5))
    img = load_gray(path, max_side=20)
    assert img.shape == (10, 20)
    np.testing.assert_allclose(img, round(0.5 * 255) / 255)


def test_downscale_noop_when_small():
    img = np.zeros((10, 12))
    assert downscale(img, 1024) is img


def test_gradient_constant():
    g = compute_gradients(np.full((5, 6), 0.3))
    assert np.all(g.magnitude == 0)


def test_gradient_step_edge():
    c = 4
    img = np.zeros((6, 9))
    img[:, c:] = 1.0
    g = compute_gradients(img)
    # central differences (I[x+1] - I[x-1]) / 2 straddling the step
    np.testing.assert_allclose(g.magnitude[2, c - 1], 0.5)
    np.testing.assert_allclose(g.magnitude[2, c], 0.5)
    assert g.orientation[2, c] in (0.0, math.pi)
    assert g.magnitude[2, c - 2] == 0 and g.magnitude[2, c + 1] == 0


def test_gradient_ramp():
    img = np.tile(np.arange(3) / 2.0, (3, 1))
    g = compute_gradients(img)
    # I(x) = x/2: central difference (1 - 0) / 2 = 0.5
    assert g.magnitude[1, 1] == pytest.approx(0.5)
    assert g.orientation[1, 1] == 0.0
    # one-sided on the border: I[1] - I[0] = 0.5
    assert g.magnitude[1, 0] == pytest.approx(0.5)


def test_gradient_orientation_range(rng):
    g = compute_gradients(rng.random((20, 20)))
    assert np.all(g.orientation >= 0) and np.all(g.orientation < 2 * math.pi)


def test_gradient_too_small():
    with pytest.raises(ImageSizeError):
        compute_gradients(np.zeros((2, 5)))


def test_dense_grid_nine():
    specs = dense_grid(128, 128, [64], 0.5)
    assert len(specs) == 9
    assert sorted({s.x for s in specs}) == [0, 32, 64]
    assert [(s.y, s.x) for s in specs[:3]] == [(0, 0), (0, 32), (0, 64)]


def test_dense_grid_single_and_empty():
    assert dense_grid(64, 64, [64], 0.37) == [PatchSpec("", 0, 0, 64)]
    assert dense_grid(32, 32, [64], 0.5) == []


def test_dense_grid_ordered_by_scale():
    specs = dense_grid(256, 256, [128, 64], 0.5)
    sides = [s.side for s in specs]
    assert sides == sorted(sides)


def test_crop_identity_and_pixel(rng):
    img = rng.random((7, 7))
    np.testing.assert_array_equal(crop(img, PatchSpec("i", 0, 0, 7)), img)
    assert crop(img, PatchSpec("i", 3, 2, 1))[0, 0] == img[2, 3]


def test_crop_idempotent(rng):
    img = rng.random((10, 12))
    a = crop(img, PatchSpec("i", 2, 3, 5))
    np.testing.assert_array_equal(crop(a, PatchSpec("i", 0, 0, 5)), a)


def test_crop_out_of_bounds():
    with pytest.raises(BoundsError):
        crop(np.zeros((5, 5)), PatchSpec("i", 2, 2, 4))
