"""Two-class learners with a shared real-valued scoring contract.

Every fitted model is a :class:`BinaryScorer`: ``score(x) > threshold`` means
the positive class, and a score exactly at the threshold is negative.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConvergenceError, DataError

SVM, LDA, NB = "SVM", "LDA", "NB"
METHODS = (SVM, LDA, NB)


def normalize_method(name):
    m = str(name).upper()
    if m not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return m


@dataclass(frozen=True, eq=False)
class BinaryScorer:
    method: str
    params: dict
    positive: str = "positive"
    negative: str = "negative"
    threshold: float = 0.0
    n_features: int = field(default=-1)

    def __post_init__(self):
        if self.n_features < 0:
            width = self.params["w"].size if "w" in self.params else self.params["mean_pos"].size
            object.__setattr__(self, "n_features", int(width))

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {x.shape[-1]}")
        p = self.params
        if self.method in (SVM, LDA):
            return x @ p["w"] + p["b"]
        return _nb_log_ratio(x, p)

    def predict(self, x, threshold=None):
        t = self.threshold if threshold is None else threshold
        return self.score(x) > t

    @property
    def is_linear(self):
        return self.method in (SVM, LDA)

    @property
    def weights(self):
        if not self.is_linear:
            raise ValueError(f"{self.method} scorer has no linear weight vector")
        return self.params["w"]

    def to_dict(self):
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {"method": self.method, "positive": self.positive, "negative": self.negative,
                "threshold": self.threshold, "n_features": self.n_features, "params": params}

    @classmethod
    def from_dict(cls, doc):
        params = {}
        for k, v in doc["params"].items():
            params[k] = np.asarray(v, dtype=np.int64 if k == "support" else float) if isinstance(v, list) else v
        return cls(doc["method"], params, doc["positive"], doc["negative"],
                   float(doc["threshold"]), int(doc["n_features"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def score(scorer, x):
    return scorer.score(x)


def _check_binary(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=bool)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DataError("x must be (n, d) with one label per row")
    if x.shape[1] == 0:
        raise DataError("no features")
    if y.all() or not y.any():
        raise DataError("both classes must be present")
    return x, y


def svm_dual_objective(alpha, x, y):
    """Soft-margin dual objective ``sum(a) - 0.5 |sum a_i y_i x_i|^2`` (y in +-1)."""
    w = (alpha * y) @ x
    return float(alpha.sum() - 0.5 * w @ w)


def svm_fit(x, y, C=1.0, tol=1e-3, max_passes=10000, positive="positive", negative="negative"):
    """Linear soft-margin SVM trained by SMO on the dual.

    ``y`` is boolean (True = positive class). The working pair is always the
    maximal KKT violator, so results are deterministic.
    """
    x, yb = _check_binary(x, y)
    if not C > 0:
        raise ValueError("C must be positive")
    ys = np.where(yb, 1.0, -1.0)
    K = np.ascontiguousarray(x @ x.T)
    n = x.shape[0]
    alpha, b, n_iter, converged = kernels.smo_solve(K, ys, float(C), float(tol), int(max_passes) * n)
    alpha = np.asarray(alpha)
    w = (alpha * ys) @ x
    support = np.flatnonzero(alpha > 0)
    scorer = BinaryScorer(SVM, {"w": w, "b": float(b), "alpha": alpha, "support": support,
                                "C": float(C), "tol": float(tol), "iterations": int(n_iter)},
                          positive, negative)
    if not converged:
        raise ConvergenceError(f"SMO did not converge in {n_iter} iterations", best=scorer)
    return scorer


def lda_fit(x, y, shrinkage=None, positive="positive", negative="negative"):
    """Two-class LDA with a ridge on the pooled (ML) covariance.

    ``shrinkage=None`` uses ``1e-6 * trace(pooled) / d``.
    """
    x, yb = _check_binary(x, y)
    xp, xn = x[yb], x[~yb]
    if len(xp) < 2 or len(xn) < 2:
        raise DataError("LDA needs at least two samples per class")
    n, d = x.shape
    mp, mn = xp.mean(axis=0), xn.mean(axis=0)
    cp, cn = xp - mp, xn - mn
    pooled = (cp.T @ cp + cn.T @ cn) / n
    lam = 1e-6 * np.trace(pooled) / d if shrinkage is None else float(shrinkage)
    if lam <= 0:
        lam = 1e-12
    cov = pooled + lam * np.eye(d)
    w = np.linalg.solve(cov, mp - mn)
    prior_term = np.log(len(xp) / len(xn))
    b = float(-(w @ ((mp + mn) / 2.0)) + prior_term)
    return BinaryScorer(LDA, {"w": w, "b": b, "mean_pos": mp, "mean_neg": mn, "shrinkage": float(lam)},
                        positive, negative)


def _nb_log_ratio(x, p):
    def loglik(mean, var):
        return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)
    return (loglik(p["mean_pos"], p["var_pos"]) - loglik(p["mean_neg"], p["var_neg"])).sum(axis=-1) \
        + p["log_prior_ratio"]


def nb_fit(x, y, var_floor=None, positive="positive", negative="negative"):
    """Gaussian naive Bayes; ``var_floor=None`` uses 1e-9 times the largest feature variance."""
    x, yb = _check_binary(x, y)
    xp, xn = x[yb], x[~yb]
    floor = 1e-9 * float(x.var(axis=0).max()) if var_floor is None else float(var_floor)
    if floor <= 0:
        floor = 1e-12
    return BinaryScorer(NB, {
        "mean_pos": xp.mean(axis=0), "mean_neg": xn.mean(axis=0),
        "var_pos": np.maximum(xp.var(axis=0), floor), "var_neg": np.maximum(xn.var(axis=0), floor),
        "log_prior_ratio": float(np.log(len(xp) / len(xn))), "var_floor": floor,
    }, positive, negative)


def fit_binary(method, x, y, C=1.0, tol=1e-3, positive="positive", negative="negative"):
    method = normalize_method(method)
    if method == SVM:
        return svm_fit(x, y, C=C, tol=tol, positive=positive, negative=negative)
    if method == LDA:
        return lda_fit(x, y, positive=positive, negative=negative)
    return nb_fit(x, y, positive=positive, negative=negative)


class GaussianMulticlass:
    """Argmax over per-class Gaussian log posteriors.

    ``shared=True`` pools one ridge-regularized covariance (multiclass LDA);
    ``shared=False`` keeps diagonal per-class variances (naive Bayes).
    """

    def __init__(self, shared):
        self.shared = shared

    def fit(self, x, y, n_classes):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y)
        n, d = x.shape
        self.means = np.vstack([x[y == c].mean(axis=0) for c in range(n_classes)])
        self.log_priors = np.log(np.bincount(y, minlength=n_classes) / n)
        centered = x - self.means[y]
        if self.shared:
            pooled = centered.T @ centered / n
            cov = pooled + (1e-6 * np.trace(pooled) / d) * np.eye(d)
            self.precision = np.linalg.inv(cov)
        else:
            floor = max(1e-9 * float(x.var(axis=0).max()), 1e-12)
            self.vars = np.vstack([np.maximum(x[y == c].var(axis=0), floor) for c in range(n_classes)])
        return self

    def decision(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.shared:
            lin = x @ self.precision @ self.means.T
            quad = 0.5 * np.einsum("ij,jk,ik->i", self.means, self.precision, self.means)
            return lin - quad + self.log_priors
        diff = x[:, None, :] - self.means[None, :, :]
        ll = -0.5 * (np.log(2 * np.pi * self.vars)[None] + diff ** 2 / self.vars[None]).sum(axis=2)
        return ll + self.log_priors

    def to_dict(self):
        doc = {"shared": self.shared, "means": self.means.tolist(), "log_priors": self.log_priors.tolist()}
        if self.shared:
            doc["precision"] = self.precision.tolist()
        else:
            doc["vars"] = self.vars.tolist()
        return doc


class LookupScorer:
    """Scores rows by looking up their true label; always correct.

    ``truth`` maps ``row.tobytes()`` to a label. Used to check that routing
    and bookkeeping add no error of their own.
    """

    is_linear = False
    method = "ORACLE"
    threshold = 0.0

    def __init__(self, truth, positive_labels, positive="positive", negative="negative"):
        self.truth = truth
        self.positive_labels = frozenset(positive_labels)
        self.positive = positive
        self.negative = negative

    def _one(self, row):
        return 1.0 if self.truth[np.ascontiguousarray(row, dtype=float).tobytes()] in self.positive_labels else -1.0

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._one(x)
        return np.array([self._one(row) for row in x])

    def predict(self, x, threshold=None):
        return self.score(x) > (self.threshold if threshold is None else threshold)
