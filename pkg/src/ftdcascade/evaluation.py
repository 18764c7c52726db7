"""Repeated k-fold evaluation of cascades and flat models."""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import SVM, normalize_method
from .dataset import LABELS, DiagnosticLabel
from .errors import DataError
from .features import connectivity_features, default_bandwidth, pca_transform
from .hierarchy import PcaPolicy, classify_many, fit_node, train_cascade, train_flat

C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
ORACLE_ROUTED = "oracle_routed"
CASCADE_ROUTED = "cascade_routed"
STEP_MODES = (ORACLE_ROUTED, CASCADE_ROUTED)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Fold membership and train/test/validation roles for each repetition.

    ``folds[r][i]`` is the fold of subject ``i`` in repetition ``r``;
    ``roles[r]`` is ``(train_folds, test_folds, val_folds)``.
    """

    ids: tuple
    k: int
    reps: int
    seed: int
    folds: tuple
    roles: tuple

    def split(self, rep):
        f = self.folds[rep]
        train, test, val = self.roles[rep]
        return (np.flatnonzero(np.isin(f, train)), np.flatnonzero(np.isin(f, test)),
                np.flatnonzero(np.isin(f, val)))


def make_folds(cohort, k=10, reps=1000, seed=0):
    """Stratified k-fold assignment, reshuffled every repetition.

    Each repetition uses ``k - 4`` folds for training, 2 for testing and 2
    for validation (``k - 2``/1/1 when k < 5); the starting fold of that
    rotation is drawn from the seed.
    """
    if k < 3:
        raise ValueError(f"k must be at least 3 to hold train, test and validation folds, got {k}")
    labels = np.asarray(cohort.label_index)
    n = labels.size
    if n < k:
        raise DataError(f"cohort of {n} subjects cannot fill {k} folds")
    small = [LABELS[c].value for c in range(len(LABELS)) if 0 < np.sum(labels == c) < k]
    if small:
        warnings.warn(f"classes smaller than k={k} are pooled without stratification: "
                      f"{', '.join(small)}", stacklevel=2)
    rng = np.random.default_rng(seed)
    folds, roles = [], []
    for _ in range(reps):
        assign = np.empty(n, dtype=np.int64)
        offset = 0
        pooled = []
        for c in range(len(LABELS)):
            members = np.flatnonzero(labels == c)
            if members.size == 0:
                continue
            if members.size < k:
                pooled.append(members)
                continue
            perm = rng.permutation(members)
            assign[perm] = (offset + np.arange(perm.size)) % k
            offset += perm.size
        if pooled:
            perm = rng.permutation(np.concatenate(pooled))
            assign[perm] = (offset + np.arange(perm.size)) % k
        # Relabel folds so no fold is systematically the large one.
        assign = rng.permutation(k)[assign]
        start = int(rng.integers(k))
        order = [(start + i) % k for i in range(k)]
        held = 2 if k >= 5 else 1
        n_train = k - 2 * held
        roles.append((tuple(order[:n_train]), tuple(order[n_train:n_train + held]),
                      tuple(order[n_train + held:])))
        assign.setflags(write=False)
        folds.append(assign)
    return FoldPlan(tuple(cohort.ids), k, reps, seed, tuple(folds), tuple(roles))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, truth, predicted):
        truth = np.asarray(truth, dtype=bool)
        predicted = np.asarray(predicted, dtype=bool)
        return cls(int(np.sum(truth & predicted)), int(np.sum(~truth & predicted)),
                   int(np.sum(~truth & ~predicted)), int(np.sum(truth & ~predicted)))

    def swapped(self):
        """Counts with the other class designated positive."""
        return ConfusionCounts(self.tn, self.fn, self.tp, self.fp)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    sensitivity: float
    specificity: float

    @property
    def sensitivity_defined(self):
        return not math.isnan(self.sensitivity)

    @property
    def specificity_defined(self):
        return not math.isnan(self.specificity)


def metrics(c):
    """Accuracy, sensitivity and specificity; undefined ratios are NaN."""
    if c.total == 0:
        raise DataError("no subjects to evaluate")
    pos = c.tp + c.fn
    neg = c.tn + c.fp
    return Metrics((c.tp + c.tn) / c.total,
                   c.tp / pos if pos else math.nan,
                   c.tn / neg if neg else math.nan)


def roc_curve(scored):
    """ROC points ``(FPR, TPR)`` over distinct score thresholds, and trapezoid AUC.

    ``scored`` is a sequence of ``(score, is_positive)``. Equal scores form a
    single threshold step.
    """
    scored = list(scored)
    s = np.array([p[0] for p in scored], dtype=float)
    y = np.array([bool(p[1]) for p in scored])
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def _macro_one_vs_rest(confusion):
    """Mean per-class sensitivity and specificity of a square confusion matrix."""
    cm = np.asarray(confusion, dtype=float)
    total = cm.sum()
    sens, spec = [], []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        fn = cm[c].sum() - tp
        fp = cm[:, c].sum() - tp
        tn = total - tp - fn - fp
        if tp + fn > 0:
            sens.append(tp / (tp + fn))
        if tn + fp > 0:
            spec.append(tn / (tn + fp))
    return (float(np.mean(sens)) if sens else math.nan, float(np.mean(spec)) if spec else math.nan)


@dataclass(frozen=True)
class EvalConfig:
    method: str = SVM
    pca: PcaPolicy | None = PcaPolicy()
    C: float = 1.0
    tol: float = 1e-3
    tune: bool = False
    features: str = "raw"
    global_pca: bool = False


def prepare_features(x, train_idx, mode):
    """Feature block for one repetition; fold-dependent parameters come from training rows."""
    if mode == "raw":
        return x
    if mode == "connectivity":
        bw = default_bandwidth(x[train_idx])
        return connectivity_features(x, bw)
    raise ValueError(f"unknown feature mode {mode!r}")


def _summary(values):
    v = np.array([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "sd": None, "n_defined": 0}
    return {"mean": float(np.mean(v)), "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
            "n_defined": int(v.size)}


def _counts_dict(c):
    return {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}


def _first_departure(spec, true_label, path):
    for (node, goes_pos), (name, score) in zip(spec.path_to(true_label), path):
        if (score > 0) != goes_pos:
            return name
    return None


def _tune_cascade_C(x, labels, spec, train, val, cfg):
    """Per-step C with the best validation accuracy; ties keep the smaller C."""
    gp = cfg.pca.fit(x[train]) if (cfg.global_pca and cfg.pca is not None) else None
    xg = x if gp is None else pca_transform(gp, x)
    tr_labels = [labels[i] for i in train]
    chosen = {}
    for node in spec.steps():
        vsel = np.array([i for i in val if labels[i] in node.labels], dtype=np.int64)
        truth = np.array([labels[i] in node.positive_labels for i in vsel], dtype=bool)
        best, best_acc = C_GRID[0], -1.0
        for c in C_GRID:
            nm = fit_node(xg[train], tr_labels, node, cfg.method,
                          None if cfg.global_pca else cfg.pca, c, cfg.tol)
            acc = float(np.mean((nm.scores(xg[vsel]) > 0) == truth)) if vsel.size else 0.0
            if acc > best_acc:
                best, best_acc = c, acc
        chosen[node.name] = best
    return chosen


def _cascade_rep(args):
    rep, x_all, labels, ids, spec, plan, cfg, fitter = args
    train, test, val = plan.split(rep)
    if not cfg.tune:
        test = np.sort(np.concatenate([test, val]))
    x = prepare_features(x_all, train, cfg.features)
    lab = np.array(labels, dtype=object)
    C = cfg.C
    if cfg.tune and fitter is None and normalize_method(cfg.method) == SVM:
        C = _tune_cascade_C(x, labels, spec, train, val, cfg)
    model = train_cascade(x[train], lab[train], spec, cfg.method, cfg.pca, C=C, tol=cfg.tol,
                          fitter=fitter, global_pca=cfg.global_pca)
    predicted, paths, scores = classify_many(model, x[test])
    truth = [labels[i] for i in test]
    confusion = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        confusion[LABELS.index(t), LABELS.index(p)] += 1

    steps = {}
    for node in spec.steps():
        s = scores[node.name]
        member = np.array([t in node.labels for t in truth])
        positive = np.array([t in node.positive_labels for t in truth])
        arrived = np.array([any(name == node.name for name, _ in p) for p in paths])
        steps[node.name] = {
            ORACLE_ROUTED: ConfusionCounts.from_predictions(positive[member], s[member] > 0),
            CASCADE_ROUTED: ConfusionCounts.from_predictions(positive[arrived & member], s[arrived & member] > 0)
            if np.any(arrived & member) else ConfusionCounts(),
            "cascade_arrivals": int(arrived.sum()),
            "scores": [(float(v), bool(p)) for v, p in zip(s[member], positive[member])],
        }
    missed = []
    for i, t, p, path in zip(test, truth, predicted, paths):
        if t != p:
            missed.append({"rep": rep, "id": ids[i], "true": t.value, "predicted": p.value,
                           "failing_step": _first_departure(spec, t, path),
                           "path": [[name, sc] for name, sc in path]})
    correct = int(np.trace(confusion))
    return {"rep": rep, "accuracy": correct / len(test), "n_test": len(test),
            "confusion": confusion, "steps": steps, "missed": missed,
            "C": C if isinstance(C, dict) else None}


def _flat_rep(args):
    rep, x_all, labels, ids, plan, cfg, head_fitter = args
    train, test, val = plan.split(rep)
    if not cfg.tune:
        test = np.sort(np.concatenate([test, val]))
    x = prepare_features(x_all, train, cfg.features)
    lab = np.array(labels, dtype=object)
    C = cfg.C
    if cfg.tune and head_fitter is None and normalize_method(cfg.method) == SVM:
        best_acc = -1.0
        for c in C_GRID:
            m = train_flat(x[train], lab[train], cfg.method, cfg.pca, C=c, tol=cfg.tol)
            acc = float(np.mean([p == labels[i] for p, i in zip(m.predict(x[val]), val)]))
            if acc > best_acc:
                C, best_acc = c, acc
    model = train_flat(x[train], lab[train], cfg.method, cfg.pca, C=C, tol=cfg.tol,
                       head_fitter=head_fitter)
    predicted = model.predict(x[test])
    decision = model.decision(x[test])
    confusion = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    missed = []
    for row, (i, p) in enumerate(zip(test, predicted)):
        t = labels[i]
        confusion[LABELS.index(t), LABELS.index(p)] += 1
        if t != p:
            missed.append({"rep": rep, "id": ids[i], "true": t.value, "predicted": p.value,
                           "failing_step": "flat",
                           "path": [[lab_.value, float(decision[row, c])] for c, lab_ in enumerate(LABELS)]})
    return {"rep": rep, "accuracy": int(np.trace(confusion)) / len(test), "n_test": len(test),
            "confusion": confusion, "missed": missed, "C": C}


def _run(fn, tasks, jobs):
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    kind: str
    method: str
    hierarchy: str | None
    step_mode: str | None
    plan: dict
    accuracy: dict
    sensitivity: dict
    specificity: dict
    per_rep_accuracy: list
    confusion: list
    steps: dict = field(default_factory=dict)
    misclassified: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "method": self.method, "hierarchy": self.hierarchy,
                "step_mode": self.step_mode, "plan": self.plan, "accuracy": self.accuracy,
                "sensitivity": self.sensitivity, "specificity": self.specificity,
                "per_rep_accuracy": self.per_rep_accuracy, "labels": [lab.value for lab in LABELS],
                "confusion": self.confusion, "steps": self.steps,
                "misclassified": self.misclassified, "config": self.config}

    def to_json(self):
        return json.dumps(_json_safe(self.to_dict()), sort_keys=True, indent=1)


def _json_safe(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _json_safe(float(obj))
    if isinstance(obj, DiagnosticLabel):
        return obj.value
    return obj


def _plan_dict(plan):
    return {"k": plan.k, "reps": plan.reps, "seed": plan.seed}


def _config_dict(cfg):
    pca = cfg.pca
    try:
        method = normalize_method(cfg.method)
    except ValueError:
        method = str(cfg.method)
    return {"method": method,
            "pca": None if pca is None or not pca.enabled else
            {"variance_fraction": pca.variance_fraction, "n_components": pca.n_components},
            "C": cfg.C, "tol": cfg.tol, "tune": cfg.tune, "features": cfg.features,
            "global_pca": cfg.global_pca}


def _overall(results):
    accs = [r["accuracy"] for r in results]
    sens, spec = zip(*[_macro_one_vs_rest(r["confusion"]) for r in results])
    confusion = np.sum([r["confusion"] for r in results], axis=0)
    return accs, _summary(accs), _summary(sens), _summary(spec), confusion.tolist()


def _check_plan(cohort, plan):
    if tuple(cohort.ids) != tuple(plan.ids):
        raise DataError("fold plan was built for a different cohort")


def evaluate_cascade(cohort, spec, method=SVM, plan=None, step_mode=ORACLE_ROUTED, config=None,
                     x=None, fitter=None, jobs=1):
    """Train on the training folds and score the test folds, once per repetition.

    ``x`` overrides ``cohort.features`` (e.g. with demographics appended).
    ``fitter`` replaces the learner at every step (see ``oracle_fitter``).
    """
    if step_mode not in STEP_MODES:
        raise ValueError(f"step_mode must be one of {STEP_MODES}")
    plan = plan or make_folds(cohort)
    _check_plan(cohort, plan)
    cfg = config or EvalConfig(method=method)
    if cfg.method != method:
        cfg = EvalConfig(method, cfg.pca, cfg.C, cfg.tol, cfg.tune, cfg.features, cfg.global_pca)
    x = np.asarray(cohort.features if x is None else x, dtype=float)
    labels = list(cohort.labels)
    tasks = [(r, x, labels, cohort.ids, spec, plan, cfg, fitter) for r in range(plan.reps)]
    results = _run(_cascade_rep, tasks, 1 if fitter is not None else jobs)
    accs, acc, sens, spec_, confusion = _overall(results)

    steps = {}
    for node in spec.steps():
        entry = {"title": node.title, "positive": node.group_name(True),
                 "negative": node.group_name(False)}
        for mode in STEP_MODES:
            per_rep = [metrics(r["steps"][node.name][mode]) if r["steps"][node.name][mode].total
                       else Metrics(math.nan, math.nan, math.nan) for r in results]
            swapped = [metrics(r["steps"][node.name][mode].swapped()) if r["steps"][node.name][mode].total
                       else Metrics(math.nan, math.nan, math.nan) for r in results]
            total = ConfusionCounts(*[sum(getattr(r["steps"][node.name][mode], f) for r in results)
                                      for f in ("tp", "fp", "tn", "fn")])
            entry[mode] = {
                "accuracy": _summary([m.accuracy for m in per_rep]),
                "sensitivity": _summary([m.sensitivity for m in per_rep]),
                "specificity": _summary([m.specificity for m in per_rep]),
                "swapped_orientation": {"sensitivity": _summary([m.sensitivity for m in swapped]),
                                        "specificity": _summary([m.specificity for m in swapped])},
                "counts": _counts_dict(total),
            }
        pooled = [p for r in results for p in r["steps"][node.name]["scores"]]
        try:
            points, auc = roc_curve(pooled)
        except DataError:
            points, auc = [], math.nan
        entry["roc"] = {"points": points, "auc": auc}
        entry["cascade_arrivals"] = sum(r["steps"][node.name]["cascade_arrivals"] for r in results)
        steps[node.name] = entry
    cfg_doc = _config_dict(cfg)
    if cfg.tune:
        cfg_doc["chosen_C"] = [r["C"] for r in results]
    return EvaluationReport("cascade", cfg_doc["method"], spec.name, step_mode, _plan_dict(plan), acc, sens,
                            spec_, accs, confusion, steps, [m for r in results for m in r["missed"]], cfg_doc)


def evaluate_flat(cohort, method=SVM, plan=None, config=None, x=None, head_fitter=None, jobs=1):
    plan = plan or make_folds(cohort)
    _check_plan(cohort, plan)
    cfg = config or EvalConfig(method=method)
    if cfg.method != method:
        cfg = EvalConfig(method, cfg.pca, cfg.C, cfg.tol, cfg.tune, cfg.features, cfg.global_pca)
    x = np.asarray(cohort.features if x is None else x, dtype=float)
    labels = list(cohort.labels)
    tasks = [(r, x, labels, cohort.ids, plan, cfg, head_fitter) for r in range(plan.reps)]
    results = _run(_flat_rep, tasks, 1 if head_fitter is not None else jobs)
    accs, acc, sens, spec_, confusion = _overall(results)
    cfg_doc = _config_dict(cfg)
    if cfg.tune:
        cfg_doc["chosen_C"] = [r["C"] for r in results]
    return EvaluationReport("flat", cfg_doc["method"], None, None, _plan_dict(plan), acc, sens, spec_,
                            accs, confusion, {}, [m for r in results for m in r["missed"]], cfg_doc)


def misclassification_report(report):
    """Rows ``(id, true, predicted, failing_step, path)`` for every test error."""
    return [(m["id"], m["true"], m["predicted"], m["failing_step"], m["path"])
            for m in report.misclassified]


@dataclass(frozen=True, eq=False)
class DiscriminativeRegionMap:
    """Feature importances ``R = (X X^T) w1`` with ``w1 = directions @ weights``."""

    R: np.ndarray
    sigma_x: np.ndarray
    w1: np.ndarray

    @property
    def magnitude(self):
        r = np.abs(self.R)
        return r if r.ndim == 1 else r.sum(axis=1)

    def ranking(self):
        """Feature indices by descending |R|."""
        return np.argsort(-self.magnitude, kind="stable")


def discriminative_regions(x_filtered, pca, classifier_weights):
    """``x_filtered`` is subjects x features; ``pca`` may be None (identity)."""
    X = np.asarray(x_filtered, dtype=float).T
    weights = np.asarray(classifier_weights, dtype=float)
    if weights.ndim == 1:
        weights = weights[:, None]
    directions = np.eye(X.shape[0]) if pca is None else np.asarray(
        pca.directions if hasattr(pca, "directions") else pca, dtype=float)
    if directions.shape[1] != weights.shape[0]:
        raise DataError(f"PCA has {directions.shape[1]} components, classifier weights have "
                        f"{weights.shape[0]} rows")
    if directions.shape[0] != X.shape[0]:
        raise DataError(f"PCA spans {directions.shape[0]} features, data has {X.shape[0]}")
    sigma_x = X @ X.T
    w1 = directions @ weights
    R = sigma_x @ w1
    if R.shape[1] == 1:
        R = R[:, 0]
    if not np.all(np.isfinite(R)):
        raise DataError("non-finite entries in the region map")
    return DiscriminativeRegionMap(R, sigma_x, w1)


def cascade_regions(model, x, labels):
    """Region map per step from the subjects in each step's subtree, centered by its PCA."""
    x = np.asarray(x, dtype=float)
    out = {}
    for node in model.spec.steps():
        nm = model.nodes[node.name]
        if not nm.scorer.is_linear:
            raise ValueError(f"step {node.name} has no linear weights ({nm.scorer.method})")
        rows = x[[lab in node.labels for lab in labels]]
        if model.global_pca is not None:
            raise ValueError("region maps need per-step PCA")
        centered = rows - (nm.pca.mean if nm.pca is not None else rows.mean(axis=0))
        out[node.name] = discriminative_regions(centered, nm.pca, nm.scorer.weights)
    return out


def backproject_regions(r, basis, atlas):
    """Map frequency-domain importances to a vertex map and then to region means."""
    from .surface import from_frequency, region_means
    return region_means(from_frequency(np.asarray(r, dtype=float), basis), atlas)


__all__ = ["FoldPlan", "make_folds", "ConfusionCounts", "Metrics", "metrics", "roc_curve",
           "EvalConfig", "EvaluationReport", "evaluate_cascade", "evaluate_flat",
           "misclassification_report", "DiscriminativeRegionMap", "discriminative_regions",
           "cascade_regions", "backproject_regions", "ORACLE_ROUTED",
           "CASCADE_ROUTED"]
