import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftdcascade.classifiers import LookupScorer
from ftdcascade.dataset import LABELS, DiagnosticLabel, SyntheticSpec, generate_synthetic
from ftdcascade.errors import DataError
from ftdcascade.evaluation import (CASCADE_ROUTED, ORACLE_ROUTED, ConfusionCounts, EvalConfig,
                                   backproject_regions, cascade_regions, discriminative_regions,
                                   evaluate_cascade, evaluate_flat, make_folds, metrics,
                                   misclassification_report, roc_curve)
from ftdcascade.features import pca_fit
from ftdcascade.hierarchy import (PcaPolicy, default_hierarchy, oracle_fitter, oracle_head_fitter,
                                  train_cascade)
from ftdcascade.surface import build_basis, coordinate_atlas, icosphere

L = DiagnosticLabel


def block_templates(regions=30, gap=0.8):
    out = {}
    for i, lab in enumerate(LABELS):
        t = np.full(regions, 2.5)
        if i:
            t[(i - 1) * 5:i * 5] -= gap
        out[lab] = t
    return out


def make_cohort(std=0.3, n=10, seed=0, counts=None):
    counts = counts or {lab: n for lab in LABELS}
    return generate_synthetic(SyntheticSpec(counts, block_templates(), std, 30, seed))


@pytest.fixture(scope="module")
def noisy():
    return make_cohort(std=0.6, n=12, seed=1)


def test_fold_example_n20():
    c = make_cohort(n=4)
    plan = make_folds(c, k=10, reps=1, seed=0)
    assert np.all(np.bincount(plan.folds[0], minlength=10) == 2)
    train, test, val = plan.split(0)
    assert (len(train), len(test), len(val)) == (12, 4, 4)


def test_small_k_roles():
    c = make_cohort(n=4)
    plan = make_folds(c, k=3, reps=2, seed=0)
    for r in range(2):
        tr, te, va = plan.roles[r]
        assert (len(tr), len(te), len(va)) == (1, 1, 1)
    with pytest.raises(ValueError):
        make_folds(c, k=2)
    with pytest.raises(DataError):
        make_folds(make_cohort(n=1), k=10)


def test_small_class_warns():
    counts = {lab: 12 for lab in LABELS}
    counts[L.AD] = 4
    with pytest.warns(UserWarning, match="AD"):
        make_folds(make_cohort(counts=counts), k=10, reps=1, seed=0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 12), st.integers(1, 3))
def test_fold_invariants_property(seed, k, reps):
    c = make_cohort(n=7)
    plan = make_folds(c, k=k, reps=reps, seed=seed)
    n = len(c)
    for r in range(reps):
        sizes = np.bincount(plan.folds[r], minlength=k)
        assert sizes.max() - sizes.min() <= 1
        train, test, val = plan.split(r)
        assert np.array_equal(np.sort(np.concatenate([train, test, val])), np.arange(n))
        assert not (set(train) & set(test) or set(train) & set(val) or set(test) & set(val))
    again = make_folds(c, k=k, reps=reps, seed=seed)
    assert all(np.array_equal(a, b) for a, b in zip(plan.folds, again.folds))
    assert plan.roles == again.roles


def test_stratification():
    c = make_cohort(n=20)
    plan = make_folds(c, k=10, reps=1, seed=3)
    for lab_idx in range(5):
        per_fold = np.bincount(plan.folds[0][c.label_index == lab_idx], minlength=10)
        assert per_fold.max() - per_fold.min() <= 1


def test_metric_examples():
    m = metrics(ConfusionCounts(tp=120, fp=2, tn=82, fn=0))
    assert m.sensitivity == pytest.approx(1.000, abs=5e-4)
    assert m.specificity == pytest.approx(0.976, abs=5e-4)
    assert metrics(ConfusionCounts(5, 0, 7, 0)).accuracy == 1.0
    m = metrics(ConfusionCounts(0, 3, 4, 0))
    assert math.isnan(m.sensitivity) and not m.sensitivity_defined
    assert m.specificity_defined
    with pytest.raises(DataError):
        metrics(ConfusionCounts())


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_accuracy_decomposition(tp, fp, tn, fn):
    c = ConfusionCounts(tp, fp, tn, fn)
    if c.total == 0:
        return
    m = metrics(c)
    p, n = tp + fn, tn + fp
    sens = m.sensitivity if p else 0.0
    spec = m.specificity if n else 0.0
    assert abs(m.accuracy - (sens * p + spec * n) / (p + n)) <= 1e-12
    s = metrics(c.swapped())
    if p and n:
        assert s.sensitivity == m.specificity and s.specificity == m.sensitivity


def test_roc_examples():
    _, auc = roc_curve([(2.0, True), (0.5, True), (1.0, False), (0.0, False)])
    assert abs(auc - 0.75) <= 1e-12
    assert roc_curve([(3, True), (2, True), (1, False)])[1] == 1.0
    pts, auc = roc_curve([(1.0, True), (1.0, False), (1.0, True)])
    assert auc == 0.5 and pts == [(0.0, 0.0), (1.0, 1.0)]
    with pytest.raises(DataError):
        roc_curve([(1.0, True)])


@given(st.lists(st.tuples(st.floats(-10, 10), st.booleans()), min_size=2, max_size=40))
def test_roc_properties(scored):
    if all(p for _, p in scored) or not any(p for _, p in scored):
        return
    pts, auc = roc_curve(scored)
    f, t = zip(*pts)
    assert all(np.diff(f) >= 0) and all(np.diff(t) >= 0)
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    assert 0.0 <= auc <= 1.0
    pos = [s for s, p in scored if p]
    neg = [s for s, p in scored if not p]
    pairs = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    assert auc == pytest.approx(pairs / (len(pos) * len(neg)), abs=1e-12)
    # order-preserving transforms that are exact in floating point
    ranks = np.unique([s for s, _ in scored], return_inverse=True)[1]
    for moved in ([(4.0 * s, p) for s, p in scored], [(float(r), p) for r, (_, p) in zip(ranks, scored)]):
        assert roc_curve(moved)[1] == pytest.approx(auc, abs=1e-12)


def test_oracle_cascade_perfect_in_both_modes(noisy):
    plan = make_folds(noisy, k=5, reps=3, seed=4)
    fitter = oracle_fitter(noisy.features, noisy.labels)
    cfg = EvalConfig(pca=None)
    for mode in (ORACLE_ROUTED, CASCADE_ROUTED):
        rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan, step_mode=mode, config=cfg,
                               fitter=fitter)
        assert rep.accuracy["mean"] == 1.0
        for step in rep.steps.values():
            assert step[mode]["accuracy"]["mean"] == 1.0
        assert misclassification_report(rep) == []
    flat = evaluate_flat(noisy, plan=plan, config=cfg,
                         head_fitter=oracle_head_fitter(noisy.features, noisy.labels))
    assert flat.accuracy["mean"] == 1.0


def test_separable_cohort_is_perfect():
    c = make_cohort(std=0.0, n=10)
    x = c.features + 1e-3 * np.random.default_rng(0).standard_normal(c.features.shape)
    plan = make_folds(c, k=5, reps=2, seed=0)
    for method in ("SVM", "LDA"):
        cfg = EvalConfig(method, PcaPolicy(0.99))
        assert evaluate_cascade(c, default_hierarchy(), method, plan, config=cfg, x=x).accuracy["mean"] == 1.0
        assert evaluate_flat(c, method, plan, config=cfg, x=x).accuracy["mean"] == 1.0


def test_step1_identical_across_modes(noisy):
    plan = make_folds(noisy, k=5, reps=2, seed=1)
    rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan)
    s1 = rep.steps["Step1"]
    assert s1[ORACLE_ROUTED] == s1[CASCADE_ROUTED]


def test_reports_are_byte_identical(noisy):
    plan = make_folds(noisy, k=5, reps=3, seed=9)
    a = evaluate_cascade(noisy, default_hierarchy(), plan=plan).to_json()
    b = evaluate_cascade(noisy, default_hierarchy(), plan=make_folds(noisy, k=5, reps=3, seed=9)).to_json()
    assert a == b
    assert evaluate_flat(noisy, plan=plan).to_json() == evaluate_flat(noisy, plan=plan).to_json()


def test_parallel_matches_serial(noisy):
    plan = make_folds(noisy, k=5, reps=4, seed=2)
    serial = evaluate_cascade(noisy, default_hierarchy(), plan=plan, jobs=1).to_json()
    parallel = evaluate_cascade(noisy, default_hierarchy(), plan=plan, jobs=3).to_json()
    assert serial == parallel
    assert evaluate_flat(noisy, plan=plan, jobs=1).to_json() == evaluate_flat(noisy, plan=plan, jobs=3).to_json()


def test_rates_in_unit_interval(noisy):
    plan = make_folds(noisy, k=5, reps=3, seed=5)
    rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan).to_dict()
    for key in ("accuracy", "sensitivity", "specificity"):
        assert 0.0 <= rep[key]["mean"] <= 1.0
    for step in rep["steps"].values():
        for mode in (ORACLE_ROUTED, CASCADE_ROUTED):
            for key in ("accuracy", "sensitivity", "specificity"):
                v = step[mode][key]["mean"]
                assert v is None or 0.0 <= v <= 1.0


def test_forced_step3_failure_is_reported(noisy):
    truth = oracle_fitter(noisy.features, noisy.labels)

    def fitter(x, y, node):
        scorer = truth(x, y, node)
        if node.name == "Step3":
            return LookupScorer(scorer.truth, frozenset())
        return scorer
    plan = make_folds(noisy, k=5, reps=2, seed=0)
    rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan, config=EvalConfig(pca=None),
                           fitter=fitter)
    rows = misclassification_report(rep)
    n_bv = sum(1 for r in range(plan.reps) for i in np.concatenate(plan.split(r)[1:])
               if noisy.labels[i] is L.bvFTD)
    assert len(rows) == n_bv
    assert all(r[3] == "Step3" and r[1] == "bvFTD" for r in rows)
    # row count equals the total of per-rep errors
    errors = sum(round((1 - a) * n) for a, n in zip(rep.per_rep_accuracy,
                                                   [len(np.concatenate(plan.split(r)[1:])) for r in range(2)]))
    assert errors == len(rows)


def test_plan_mismatch(noisy):
    plan = make_folds(make_cohort(n=12, seed=9), k=5, reps=1, seed=0)
    other = make_cohort(n=11)
    with pytest.raises(DataError):
        evaluate_cascade(other, default_hierarchy(), plan=plan)


def test_tuning_records_choices(noisy):
    plan = make_folds(noisy, k=10, reps=2, seed=0)
    rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan, config=EvalConfig(tune=True))
    chosen = rep.config["chosen_C"]
    assert len(chosen) == 2 and set(chosen[0]) == {"Step1", "Step2", "Step3", "Step4"}
    flat = evaluate_flat(noisy, plan=plan, config=EvalConfig(tune=True))
    assert len(flat.config["chosen_C"]) == 2


def test_connectivity_feature_mode(noisy):
    plan = make_folds(noisy, k=5, reps=1, seed=0)
    rep = evaluate_cascade(noisy, default_hierarchy(), plan=plan, config=EvalConfig(features="connectivity"))
    assert 0.0 <= rep.accuracy["mean"] <= 1.0


def test_region_identity_algebra():
    d = 5
    r = discriminative_regions(np.eye(d), None, np.eye(d)[:, 0])
    np.testing.assert_array_equal(r.R, np.eye(d)[0])
    assert r.ranking()[0] == 0
    x = np.random.default_rng(0).normal(size=(7, d))
    w = np.random.default_rng(1).normal(size=d)
    np.testing.assert_allclose(discriminative_regions(2 * x, None, w).R, 4 * discriminative_regions(x, None, w).R)
    with pytest.raises(DataError):
        discriminative_regions(x, np.eye(d)[:, :2], w)
    with pytest.raises(DataError):
        discriminative_regions(x, np.eye(d + 1)[:, :d], w)


def test_region_map_with_pca():
    x = np.random.default_rng(2).normal(size=(20, 6))
    pca = pca_fit(x, n_components=3)
    w = np.array([1.0, -2.0, 0.5])
    r = discriminative_regions(x - pca.mean, pca, w)
    X = (x - pca.mean).T
    np.testing.assert_allclose(r.R, X @ X.T @ (pca.directions @ w))


def test_block_concentration():
    regions, block = 40, slice(10, 20)
    hits = []
    for seed in range(5):
        templates = {lab: np.full(regions, 2.5) for lab in LABELS}
        for lab in LABELS:
            if lab is not L.CN:
                templates[lab][block] -= 0.6
        c = generate_synthetic(SyntheticSpec({lab: 15 for lab in LABELS}, templates, 0.2, regions, seed))
        model = train_cascade(c.features, c.labels, default_hierarchy(), "SVM")
        maps = cascade_regions(model, c.features, c.labels)
        top = maps["Step1"].ranking()[:10]
        hits.append(np.mean([block.start <= i < block.stop for i in top]))
    assert np.mean(hits) >= 0.8


def test_cascade_regions_requires_linear():
    c = make_cohort(std=0.3)
    model = train_cascade(c.features, c.labels, default_hierarchy(), "NB")
    with pytest.raises(ValueError):
        cascade_regions(model, c.features, c.labels)


def test_backprojection_shapes():
    mesh = icosphere(2)
    basis = build_basis(mesh, 10)
    atlas = coordinate_atlas(mesh, 4)
    out = backproject_regions(np.r_[1.0, np.zeros(9)], basis, atlas)
    np.testing.assert_allclose(out, 1 / np.sqrt(mesh.n_vertices))
