"""Property tests, one per stated invariant, each over 100 derandomized draws."""

import json
import math
from collections import Counter

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from bcond.aggregation import ambiguity_filter, average_likelihood, majority_vote, margins
from bcond.classifier import SoftmaxModel, TrainConfig, fit_softmax, predict
from bcond.cli import main
from bcond.config import PipelineConfig, parse_assignments
from bcond.dataset import (BuildingRecord, ConditionCategory, ConditionClass, map_category, partition,
                           write_manifest)
from bcond.descriptor import DESCRIPTOR_SIZE, Descriptor, PatchRecord, describe
from bcond.evaluation import accuracy, confuse, pearson, zero_rule
from bcond.imaging import GradientField, PatchSpec, check_contained, compute_gradients, dense_grid, grid_step
from bcond.regression import build_design, ols_fit
from bcond.selection import (BUILDING_CLASS, DEFAULT_RELEVANCE_CLASSES, SelectionConfig, contrast_filter,
                             kmeans, relevance_filter, select_pipeline)
from bcond.synth import render_facade, simulate_regression_data, synth_generate

from conftest import brute_descriptor, separable_blobs

seeds = st.integers(0, 2 ** 32 - 1)


def _rng(seed):
    return np.random.default_rng(seed)


# ------------------------------------------------------------------ dataset

@given(st.sampled_from(list(ConditionCategory)))
def test_map_category_total_and_preimages(cat):
    assert map_category(cat) in ConditionClass
    sizes = Counter(map_category(c) for c in ConditionCategory)
    assert sizes == {ConditionClass.A: 2, ConditionClass.B: 2, ConditionClass.C: 5}


@given(seeds, st.integers(3, 12), st.integers(3, 12), st.integers(3, 12))
def test_partition_disjoint_cover(seed, na, nb, nc):
    cats = ["c1"] * na + ["c3"] * nb + ["c6"] * nc
    recs = [BuildingRecord(f"h{i}", ("i.png",), ConditionCategory[c], 1990) for i, c in enumerate(cats)]
    split = partition(recs, (0.6, 0.2, 0.2), seed)
    ids = [r.house_id for _, part in split.items() for r in part]
    assert len(ids) == len(set(ids))
    assert sorted(ids) == sorted(r.house_id for r in recs)


@given(seeds)
def test_synth_bit_reproducible(seed):
    a = render_facade(ConditionClass(seed % 3), 160, _rng(seed))
    b = render_facade(ConditionClass(seed % 3), 160, _rng(seed))
    assert a.tobytes() == b.tobytes()


def test_synth_generate_reproducible_on_disk(tmp_path):
    for seed in range(3):
        synth_generate(tmp_path / f"a{seed}", (1, 1, 1), seed=seed)
        synth_generate(tmp_path / f"b{seed}", (1, 1, 1), seed=seed)
        for name in ("manifest.json", "images/h00000_0.png", "images/h00002_0.png"):
            assert (tmp_path / f"a{seed}" / name).read_bytes() == (tmp_path / f"b{seed}" / name).read_bytes()


# ------------------------------------------------------------------ imaging

@given(st.integers(16, 400), st.integers(16, 400),
       st.lists(st.integers(8, 200), min_size=1, max_size=4, unique=True),
       st.sampled_from([0.25, 0.37, 0.5, 0.75, 1.0]))
def test_dense_grid_count_and_containment(w, h, scales, f):
    specs = dense_grid(w, h, scales, f)
    for s in scales:
        step = grid_step(s, f)
        brute = sum(1 for y in range(0, h) for x in range(0, w)
                    if x % step == 0 and y % step == 0 and x + s <= w and y + s <= h)
        expected = (math.floor((w - s) / step) + 1) * (math.floor((h - s) / step) + 1) if s <= min(w, h) else 0
        got = sum(1 for p in specs if p.side == s)
        assert got == brute == expected
    for p in specs:
        check_contained(p, h, w)


@given(seeds, st.floats(-5, 5))
def test_gradients_shift_invariant(seed, c):
    img = _rng(seed).random((12, 17))
    a, b = compute_gradients(img), compute_gradients(img + c)
    np.testing.assert_allclose(b.magnitude, a.magnitude, atol=1e-12)
    mask = a.magnitude > 1e-9
    diff = np.angle(np.exp(1j * (b.orientation - a.orientation)))
    assert np.all(np.abs(diff[mask]) < 1e-9)


# --------------------------------------------------------------- descriptor

@given(seeds, st.floats(0.01, 100))
def test_raw_norm_scales_with_magnitude(seed, c):
    g = compute_gradients(_rng(seed).random((16, 16)))
    spec = PatchSpec("s", 0, 0, 16)
    d = describe(g, spec)
    scaled = describe(GradientField(g.magnitude * c, g.orientation), spec)
    assert math.isclose(scaled.raw_norm, c * d.raw_norm, rel_tol=1e-12)
    np.testing.assert_allclose(scaled.values, d.values, atol=1e-12)


@given(seeds, st.integers(4, 40))
def test_describe_matches_brute_force(seed, side):
    rng = _rng(seed)
    img = rng.random((side + 6, side + 6))
    g = compute_gradients(img)
    x, y = int(rng.integers(0, 7)), int(rng.integers(0, 7))
    d = describe(g, PatchSpec("b", x, y, side))
    values, norm = brute_descriptor(g.magnitude, g.orientation, x, y, side)
    np.testing.assert_allclose(d.values, values, atol=1e-9, rtol=0)
    assert math.isclose(d.raw_norm, norm, rel_tol=1e-12, abs_tol=1e-12)


@given(seeds, st.integers(1, 10))
def test_rotation_180_preserves_raw_norm(seed, cells):
    side = 4 * cells
    img = _rng(seed).random((side, side))
    spec = PatchSpec("r", 0, 0, side)
    a = describe(compute_gradients(img), spec)
    b = describe(compute_gradients(np.rot90(img, 2)), spec)
    assert math.isclose(a.raw_norm, b.raw_norm, rel_tol=1e-9)


# ---------------------------------------------------------------- selection

@given(seeds)
def test_pipeline_stages_are_subsets(seed):
    rng = _rng(seed)
    img = render_facade(ConditionClass(int(rng.integers(3))), 160, rng)
    trace = {}
    names = DEFAULT_RELEVANCE_CLASSES
    model = SoftmaxModel(rng.normal(0, 1, (13, DESCRIPTOR_SIZE)), rng.normal(0, 1, 13), "descriptor", names)
    select_pipeline(img, SelectionConfig(scales=(64, 96), k=12, seed=seed % 1000), "p", model, trace=trace)
    stages = [trace["grid"], trace["representatives"], trace["contrast"], trace["relevance"]]
    for before, after in zip(stages, stages[1:]):
        assert {p.spec for p in after} <= {p.spec for p in before}


@given(seeds, st.integers(1, 60), st.integers(1, 12))
def test_kmeans_inertia_not_above_initial(seed, n, k):
    x = _rng(seed).random((n, 5))
    res = kmeans(x, k, seed=seed % 1000)
    assert res.inertia <= res.initial_inertia + 1e-12


@given(st.lists(st.integers(0, 6), min_size=0, max_size=60), st.floats(0.01, 1.0))
def test_contrast_filter_separates_norms(norms, t):
    reps = [PatchRecord(PatchSpec("c", i, 0, 8), Descriptor(np.zeros(1), float(n))) for i, n in enumerate(norms)]
    kept = contrast_filter(reps, t)
    kept_ids = {id(p) for p in kept}
    rejected = [p.raw_norm for p in reps if id(p) not in kept_ids and p.raw_norm > 0]
    if kept and rejected:
        assert min(p.raw_norm for p in kept) >= max(rejected)
    assert all(p.raw_norm > 0 for p in kept)


@given(seeds)
def test_relevance_filter_equals_argmax(seed):
    rng = _rng(seed)
    names = DEFAULT_RELEVANCE_CLASSES
    model = SoftmaxModel(rng.normal(0, 3, (13, DESCRIPTOR_SIZE)), rng.normal(0, 1, 13), "descriptor", names)
    x = rng.random((20, DESCRIPTOR_SIZE))
    patches = [PatchRecord(PatchSpec("r", i, 0, 8), Descriptor(v, 1.0)) for i, v in enumerate(x)]
    building = names.index(BUILDING_CLASS)
    oracle = [p for p in patches if int(np.argmax(predict(model, p))) == building]
    assert relevance_filter(patches, model) == oracle


# --------------------------------------------------------------- classifier

@given(seeds)
def test_training_loss_decreases(seed):
    x, y = separable_blobs(_rng(seed), 30)
    _, _, trace = fit_softmax(x, y, 3, TrainConfig(epochs=30, seed=seed % 1000))
    assert trace[-1] < trace[0]


@given(seeds)
def test_predict_is_pure(seed):
    rng = _rng(seed)
    model = SoftmaxModel(rng.normal(size=(3, DESCRIPTOR_SIZE)), rng.normal(size=3))
    patch = PatchRecord(PatchSpec("p", 0, 0, 8), Descriptor(rng.random(DESCRIPTOR_SIZE), 1.0))
    assert predict(model, patch).tobytes() == predict(model, patch).tobytes()


@given(seeds, st.floats(1e-3, 1e-1))
def test_weight_decay_shrinks_weights(seed, wd):
    x, y = separable_blobs(_rng(seed), 20)
    w0, _, _ = fit_softmax(x, y, 3, TrainConfig(epochs=10, learning_rate=0.1, weight_decay=0.0, seed=1))
    w1, _, _ = fit_softmax(x, y, 3, TrainConfig(epochs=10, learning_rate=0.1, weight_decay=wd, seed=1))
    assert np.linalg.norm(w1) < np.linalg.norm(w0)


@given(seeds, st.floats(-50, 50))
def test_argmax_invariant_under_score_shift(seed, c):
    rng = _rng(seed)
    w, b = rng.normal(size=(3, DESCRIPTOR_SIZE)), rng.normal(size=3)
    x = rng.random((30, DESCRIPTOR_SIZE))
    a = SoftmaxModel(w, b).predict_features(x)
    shifted = SoftmaxModel(w, b + c).predict_features(x)
    np.testing.assert_array_equal(a.argmax(1), shifted.argmax(1))
    np.testing.assert_allclose(a, shifted, atol=1e-9)


# -------------------------------------------------------------- aggregation

likelihood_lists = st.builds(lambda seed, n: _rng(seed).dirichlet(np.ones(3) * 0.5, size=n), seeds, st.integers(0, 30))


@given(likelihood_lists, st.floats(0, 1))
def test_ambiguity_filter_subset_and_extremes(p, threshold):
    kept = ambiguity_filter(p, threshold)
    rows = {tuple(r) for r in p}
    assert all(tuple(r) in rows for r in kept)
    assert len(ambiguity_filter(p, 0.0)) == len(p)
    onehot = ambiguity_filter(p, 1.0)
    assert np.all(margins(onehot) >= 1 - 1e-12) if len(onehot) else True


@given(likelihood_lists.filter(lambda p: len(p) > 0))
def test_average_likelihood_sums_to_one(p):
    _, vec = average_likelihood(p)
    assert abs(vec.sum() - 1.0) <= 1e-6


@given(likelihood_lists, seeds)
def test_majority_vote_permutation_invariant(p, seed):
    perm = _rng(seed).permutation(len(p))
    assert majority_vote(p) == majority_vote(p[perm])


@given(seeds, st.integers(0, 2), st.integers(1, 10))
def test_majority_vote_strict_majority(seed, winner, extra):
    rng = _rng(seed)
    n_win = extra + int(rng.integers(1, 5))
    n_other = int(rng.integers(0, n_win))
    rows = []
    for i in range(n_win + n_other):
        cls = winner if i < n_win else int(rng.choice([c for c in range(3) if c != winner]))
        v = rng.random(3) * 0.1
        v[cls] = 0.2 + rng.random()  # tiny or large, the argmax is all that counts
        rows.append(v / v.sum())
    assert int(majority_vote(rows)) == winner


# --------------------------------------------------------------- evaluation

@given(seeds, st.integers(1, 200))
def test_accuracy_range_and_row_permutation(seed, n):
    rng = _rng(seed)
    m = confuse(rng.integers(0, 3, n).tolist(), rng.integers(0, 3, n).tolist())
    assert 0.0 <= accuracy(m) <= 1.0
    perm = rng.permutation(3)
    assert m[perm].sum() == m.sum()


@given(seeds, st.integers(0, 200))
def test_confuse_totals(seed, n):
    rng = _rng(seed)
    t = rng.integers(0, 3, n).tolist()
    m = confuse(t, rng.integers(0, 3, n).tolist())
    assert m.sum() == n
    assert m.sum(1).tolist() == np.bincount(t, minlength=3).tolist()


@given(seeds, st.floats(0.01, 100), st.floats(-100, 100), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariant(seed, a, b, c, d):
    rng = _rng(seed)
    x, y = rng.normal(size=20), rng.normal(size=20)
    assert math.isclose(pearson(a * x + b, c * y + d), pearson(x, y), rel_tol=1e-9, abs_tol=1e-9)


@given(seeds, st.integers(1, 200))
def test_zero_rule_equals_constant_majority(seed, n):
    t = _rng(seed).integers(0, 3, n).tolist()
    majority = Counter(t).most_common(1)[0][0]
    assert zero_rule(t) == accuracy(confuse(t, [majority] * n))


# --------------------------------------------------------------- regression

def _sim_fit(seed, n):
    years, classes, values = simulate_regression_data(n, seed)
    x, y = build_design(zip(years, classes, values))
    return x, y, ols_fit(x, y)


@given(seeds, st.integers(20, 500))
def test_residuals_orthogonal(seed, n):
    x, y, fit = _sim_fit(seed, n)
    resid = y - x @ fit.coef
    scale = np.linalg.norm(x, axis=0) * max(1.0, np.linalg.norm(resid))
    assert np.all(np.abs(x.T @ resid) <= 1e-8 * scale)


@given(seeds, st.floats(-10, 10))
def test_constant_shift_moves_intercept_only(seed, c):
    x, y, fit = _sim_fit(seed, 200)
    shifted = ols_fit(x, y + c)
    assert math.isclose(shifted.coef[0], fit.coef[0] + c, abs_tol=1e-9)
    np.testing.assert_allclose(shifted.coef[1:], fit.coef[1:], atol=1e-9)


@given(seeds, st.integers(20, 300))
def test_adjusted_r2_and_f(seed, n):
    _, _, fit = _sim_fit(seed, n)
    assert fit.adj_r2 <= fit.r2
    if 0 < fit.r2 < 1:
        assert fit.f_stat > 0


@given(seeds)
def test_acceptance_dataset_coefficient_signs(seed):
    _, _, fit = _sim_fit(seed, 2000)
    assert fit.coef[1] > 0 and fit.coef[2] < 0 and fit.coef[3] < fit.coef[2]


# ---------------------------------------------------------------------- cli

@given(seeds, st.integers(1, 100), st.sampled_from(["MV", "LH"]), st.floats(0.05, 1.0))
def test_config_text_round_trip(seed, k, method, t):
    cfg = PipelineConfig(k=k, method=method, t=t, seed=seed)
    back = PipelineConfig(**parse_assignments(cfg.to_text().splitlines()))
    assert back == cfg and back.hash == cfg.hash


@given(seeds)
def test_evaluate_rerun_from_files(tmp_path_factory, seed):
    rng = _rng(seed)
    tmp = tmp_path_factory.mktemp("ev")
    n = 12
    recs = [BuildingRecord(f"h{i}", ("x.png",), ConditionCategory[["c1", "c3", "c6"][i % 3]],
                           int(rng.integers(1900, 2015)), float(rng.random()), "test") for i in range(n)]
    write_manifest(tmp / "m.json", recs)
    lines = ["image_id,method,verdict,n_patches_used,p_A,p_B,p_C,max_patch_likelihood"]
    for r in recs:
        v = ["A", "B", "C", "undecidable"][int(rng.integers(4))]
        lines.append(f"{r.house_id}_0,MV,{v},3,,,,0.9")
        lines.append(f"{r.house_id}_0,LH,{v},3,0.3,0.3,0.4,0.9")
    (tmp / "p.csv").write_text("\n".join(lines) + "\n")
    args = ["evaluate", "--manifest", str(tmp / "m.json"), "--predictions", str(tmp / "p.csv"), "--seed", str(seed)]
    assert main(args + ["--out", str(tmp / "a")]) == 0
    assert main(args + ["--out", str(tmp / "b")]) == 0
    a = (tmp / "a/metrics.json").read_bytes()
    assert a == (tmp / "b/metrics.json").read_bytes()
    payload = json.loads(a)
    assert PipelineConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in payload["config"].items()}) \
        == PipelineConfig(seed=seed)
