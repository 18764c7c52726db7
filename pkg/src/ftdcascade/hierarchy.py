"""Diagnostic cascades of binary classifiers and the flat five-class baseline."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (LDA, NB, SVM, BinaryScorer, GaussianMulticlass, LookupScorer,
                          fit_binary, normalize_method)
from .dataset import GROUPS, LABELS, DiagnosticLabel, parse_label
from .errors import DataError
from .features import PcaModel, pca_fit, pca_transform

_GROUP_BY_MEMBERS = {v: k for k, v in GROUPS.items()}


@dataclass(frozen=True)
class Node:
    """Internal node; children are nodes or leaf labels."""

    name: str
    positive: "Node | DiagnosticLabel"
    negative: "Node | DiagnosticLabel"
    caption: str | None = None

    def side_labels(self, positive):
        return leaves(self.positive if positive else self.negative)

    @property
    def positive_labels(self):
        return leaves(self.positive)

    @property
    def negative_labels(self):
        return leaves(self.negative)

    @property
    def labels(self):
        return self.positive_labels | self.negative_labels

    def group_name(self, positive):
        members = self.side_labels(positive)
        if members in _GROUP_BY_MEMBERS:
            return _GROUP_BY_MEMBERS[members]
        if len(members) == 1:
            return next(iter(members)).value
        return "+".join(lab.value for lab in LABELS if lab in members)

    @property
    def title(self):
        """Table row label; ``caption`` overrides the ``negative vs positive`` default."""
        return f"{self.name} ({self.caption or self.group_name(False) + ' vs ' + self.group_name(True)})"


def leaves(node):
    if isinstance(node, DiagnosticLabel):
        return frozenset({node})
    return leaves(node.positive) | leaves(node.negative)


@dataclass(frozen=True)
class HierarchySpec:
    root: Node
    name: str = "custom"

    def steps(self):
        """Internal nodes in pre-order (root first, positive branch before negative)."""
        out = []

        def walk(node):
            if isinstance(node, Node):
                out.append(node)
                walk(node.positive)
                walk(node.negative)
        walk(self.root)
        return out

    def step(self, name):
        for s in self.steps():
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def labels(self):
        return leaves(self.root)

    def path_to(self, label):
        """Root-to-leaf list of ``(node, goes_positive)`` for a leaf label."""
        path = []
        node = self.root
        while isinstance(node, Node):
            pos = label in node.positive_labels
            if not pos and label not in node.negative_labels:
                raise KeyError(f"{label} is not a leaf of this hierarchy")
            path.append((node, pos))
            node = node.positive if pos else node.negative
        return path

    def depth(self, label):
        return len(self.path_to(label))

    def validate(self):
        seen_names = set()
        seen_leaves = []

        def walk(node):
            if isinstance(node, DiagnosticLabel):
                seen_leaves.append(node)
                return
            if not isinstance(node, Node):
                raise DataError(f"invalid hierarchy element {node!r}")
            if node.name in seen_names:
                raise DataError(f"duplicate step name {node.name!r}")
            seen_names.add(node.name)
            if node.positive_labels & node.negative_labels:
                raise DataError(f"step {node.name!r} has overlapping sides")
            walk(node.positive)
            walk(node.negative)
        walk(self.root)
        if len(seen_leaves) != len(set(seen_leaves)):
            raise DataError("a leaf label is reachable by more than one path")
        if set(seen_leaves) != set(LABELS):
            missing = sorted(lab.value for lab in set(LABELS) - set(seen_leaves))
            raise DataError(f"hierarchy does not cover labels: {', '.join(missing)}")
        return self

    def to_dict(self):
        def enc(node):
            if isinstance(node, DiagnosticLabel):
                return node.value
            out = {"name": node.name, "positive": enc(node.positive), "negative": enc(node.negative)}
            if node.caption:
                out["caption"] = node.caption
            return out
        return {"name": self.name, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, doc):
        def dec(obj):
            if isinstance(obj, str):
                return parse_label(obj)
            try:
                return Node(str(obj["name"]), dec(obj["positive"]), dec(obj["negative"]), obj.get("caption"))
            except (KeyError, TypeError) as exc:
                raise DataError(f"bad hierarchy node: {exc}") from None
        root = doc["root"] if "root" in doc else doc
        return cls(dec(root), doc.get("name", "custom")).validate()


L = DiagnosticLabel


def default_hierarchy():
    """CN vs dementia, then non-FTD vs FTD, bvFTD vs PPA, nfvPPA vs svPPA."""
    step4 = Node("Step4", positive=L.svPPA, negative=L.nfvPPA, caption="nfvPPA vs svPPA")
    step3 = Node("Step3", positive=L.bvFTD, negative=step4, caption="bvFTD vs PPA")
    step2 = Node("Step2", positive=step3, negative=L.AD, caption="FTD vs Non-FTD")
    return HierarchySpec(Node("Step1", positive=step2, negative=L.CN, caption="CN vs Dementia"), "default")


def alternate_hierarchies():
    """Two label-peeling orders used to check that the default order matters."""
    a4 = Node("Step4", positive=L.nfvPPA, negative=L.bvFTD)
    a3 = Node("Step3", positive=L.svPPA, negative=a4)
    a2 = Node("Step2", positive=a3, negative=L.AD)
    alt1 = HierarchySpec(Node("Step1", positive=a2, negative=L.CN), "alt1")

    b4 = Node("Step4", positive=L.nfvPPA, negative=L.AD)
    b3 = Node("Step3", positive=L.svPPA, negative=b4)
    b2 = Node("Step2", positive=L.bvFTD, negative=b3)
    alt2 = HierarchySpec(Node("Step1", positive=b2, negative=L.CN), "alt2")
    return [alt1, alt2]


def load_hierarchy(choice):
    """``default``, ``alt1``, ``alt2`` or a path to a JSON file."""
    if choice in (None, "default"):
        return default_hierarchy()
    for spec in alternate_hierarchies():
        if spec.name == choice:
            return spec
    path = Path(choice)
    try:
        return HierarchySpec.from_dict(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read hierarchy {choice!r}: {exc}") from None


@dataclass(frozen=True)
class PcaPolicy:
    variance_fraction: float = 0.95
    n_components: int | None = None
    enabled: bool = True

    def fit(self, x):
        if not self.enabled:
            return None
        return pca_fit(x, self.variance_fraction, self.n_components)


def _project(pca, x):
    return x if pca is None else pca_transform(pca, x)


@dataclass(frozen=True, eq=False)
class NodeModel:
    pca: PcaModel | None
    scorer: object

    def scores(self, x):
        return np.asarray(self.scorer.score(_project(self.pca, x)), dtype=float)


@dataclass(frozen=True, eq=False)
class CascadeModel:
    spec: HierarchySpec
    nodes: dict
    method: str = SVM
    global_pca: PcaModel | None = None

    def node_scores(self, x):
        """Scores of every step on every row, as if each row reached every step."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = _project(self.global_pca, x)
        return {name: nm.scores(x) for name, nm in self.nodes.items()}

    def to_dict(self):
        for nm in self.nodes.values():
            if not isinstance(nm.scorer, BinaryScorer):
                raise ValueError("only fitted BinaryScorer models can be serialized")
        return {
            "kind": "cascade", "method": self.method, "hierarchy": self.spec.to_dict(),
            "global_pca": None if self.global_pca is None else self.global_pca.to_dict(),
            "nodes": {name: {"pca": None if nm.pca is None else nm.pca.to_dict(),
                             "scorer": nm.scorer.to_dict()} for name, nm in self.nodes.items()},
        }

    @classmethod
    def from_dict(cls, doc):
        nodes = {name: NodeModel(None if d["pca"] is None else PcaModel.from_dict(d["pca"]),
                                 BinaryScorer.from_dict(d["scorer"]))
                 for name, d in doc["nodes"].items()}
        gp = doc.get("global_pca")
        return cls(HierarchySpec.from_dict(doc["hierarchy"]), nodes, doc["method"],
                   None if gp is None else PcaModel.from_dict(gp))


def _as_labels(labels):
    return [lab if isinstance(lab, DiagnosticLabel) else parse_label(lab) for lab in labels]


def _node_data(x, labels, node):
    in_node = np.array([lab in node.labels for lab in labels])
    y = np.array([lab in node.positive_labels for lab in labels])[in_node]
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos < 2 or n_neg < 2:
        raise DataError(f"step {node.name!r} needs at least 2 training subjects per side "
                        f"(got {n_pos} {node.group_name(True)}, {n_neg} {node.group_name(False)})")
    return x[in_node], y


def fit_node(x, labels, node, method=SVM, pca=PcaPolicy(), C=1.0, tol=1e-3, fitter=None):
    """PCA and scorer for one step, trained on the rows whose label is under it."""
    xn, y = _node_data(x, labels, node)
    node_pca = None if pca is None else pca.fit(xn)
    xp = _project(node_pca, xn)
    if fitter is not None:
        return NodeModel(node_pca, fitter(xp, y, node))
    return NodeModel(node_pca, fit_binary(method, xp, y, C=C, tol=tol,
                                          positive=node.group_name(True),
                                          negative=node.group_name(False)))


def train_cascade(x, labels, spec, method=SVM, pca=PcaPolicy(), C=1.0, tol=1e-3,
                  fitter=None, global_pca=False):
    """Fit one PCA and one binary scorer per step on that step's subtree only.

    ``C`` may be a mapping from step name to value. ``fitter(x, y, node)``
    overrides the learner entirely.
    """
    x = np.asarray(x, dtype=float)
    labels = _as_labels(labels)
    method = method if fitter is not None else normalize_method(method)
    gp = pca.fit(x) if (global_pca and pca is not None) else None
    xg = _project(gp, x)
    nodes = {}
    for node in spec.steps():
        c = C.get(node.name, 1.0) if isinstance(C, dict) else C
        nodes[node.name] = fit_node(xg, labels, node, method, None if global_pca else pca,
                                    c, tol, fitter)
    return CascadeModel(spec, nodes, str(method), gp)


def route(spec, node_scores, row):
    """Follow score signs from the root; returns ``(label, [(step, score), ...])``."""
    node = spec.root
    path = []
    while isinstance(node, Node):
        s = float(node_scores[node.name][row])
        path.append((node.name, s))
        node = node.positive if s > 0 else node.negative
    return node, path


def classify(model, x):
    """Label and decision path for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("classify expects a single feature vector")
    return route(model.spec, model.node_scores(x[None, :]), 0)


def classify_many(model, x):
    scores = model.node_scores(x)
    n = np.atleast_2d(x).shape[0]
    results = [route(model.spec, scores, i) for i in range(n)]
    return [r[0] for r in results], [r[1] for r in results], scores


def oracle_fitter(x, labels):
    """Fitter producing always-correct scorers for rows of ``x`` (use with PCA disabled)."""
    truth = {np.ascontiguousarray(row, dtype=float).tobytes(): lab
             for row, lab in zip(np.asarray(x, dtype=float), _as_labels(labels))}

    def fit(_x, _y, node):
        return LookupScorer(truth, node.positive_labels, node.group_name(True), node.group_name(False))
    return fit


@dataclass(frozen=True, eq=False)
class FlatModel:
    """Five class heads over one shared PCA; argmax ties go to the earliest label."""

    method: str
    pca: PcaModel | None
    heads: list = field(default_factory=list)
    multiclass: GaussianMulticlass | None = None

    def decision(self, x):
        x = _project(self.pca, np.atleast_2d(np.asarray(x, dtype=float)))
        if self.multiclass is not None:
            return self.multiclass.decision(x)
        return np.column_stack([np.asarray(h.score(x), dtype=float) for h in self.heads])

    def predict(self, x):
        return [LABELS[i] for i in np.argmax(self.decision(x), axis=1)]


def train_flat(x, labels, method=SVM, pca=PcaPolicy(), C=1.0, tol=1e-3, head_fitter=None):
    """One-vs-rest SVM heads, or a multiclass Gaussian rule for LDA/NB."""
    x = np.asarray(x, dtype=float)
    labels = _as_labels(labels)
    idx = np.array([LABELS.index(lab) for lab in labels])
    counts = np.bincount(idx, minlength=len(LABELS))
    if np.any(counts < 2):
        missing = [LABELS[i].value for i in np.flatnonzero(counts < 2)]
        raise DataError(f"flat model needs every class with at least 2 subjects; short: {', '.join(missing)}")
    shared = pca.fit(x) if pca is not None else None
    xp = _project(shared, x)
    if head_fitter is not None:
        heads = [head_fitter(xp, idx == c, LABELS[c]) for c in range(len(LABELS))]
        return FlatModel("ORACLE", shared, heads)
    method = normalize_method(method)
    if method == SVM:
        heads = [fit_binary(SVM, xp, idx == c, C=C, tol=tol, positive=LABELS[c].value, negative="rest")
                 for c in range(len(LABELS))]
        return FlatModel(method, shared, heads)
    rule = GaussianMulticlass(shared=(method == LDA)).fit(xp, idx, len(LABELS))
    return FlatModel(method, shared, multiclass=rule)


def oracle_head_fitter(x, labels):
    truth = {np.ascontiguousarray(row, dtype=float).tobytes(): lab
             for row, lab in zip(np.asarray(x, dtype=float), _as_labels(labels))}

    def fit(_x, _y, label):
        return LookupScorer(truth, {label}, label.value, "rest")
    return fit


__all__ = ["Node", "HierarchySpec", "CascadeModel", "FlatModel", "NodeModel", "PcaPolicy",
           "default_hierarchy", "alternate_hierarchies", "load_hierarchy", "train_cascade", "fit_node",
           "classify", "classify_many", "route", "train_flat", "oracle_fitter",
           "oracle_head_fitter", "leaves", "NB", "LDA", "SVM"]
