"""Region-distance connectivity features and PCA."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def connectivity(region_means, bandwidth):
    """Gaussian-kernel weights ``exp(-|m_i - m_j|^2 / (2 s^2))`` between regions."""
    m = np.asarray(region_means, dtype=float)
    if m.ndim != 1 or m.size < 2:
        raise DataError("connectivity needs at least two region means")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    d = np.abs(m[:, None] - m[None, :])
    # Floor keeps weights strictly positive where exp underflows.
    w = np.maximum(np.exp(-(d * d) / (2.0 * bandwidth * bandwidth)), np.finfo(float).tiny)
    np.fill_diagonal(w, 1.0)
    return w


def vectorize_connectivity(matrix):
    """Strict upper triangle, row-major."""
    matrix = np.asarray(matrix)
    return matrix[np.triu_indices(matrix.shape[0], k=1)]


def devectorize_connectivity(vector):
    vector = np.asarray(vector, dtype=float)
    r = int(round((1 + np.sqrt(1 + 8 * vector.size)) / 2))
    if r * (r - 1) // 2 != vector.size:
        raise DataError(f"length {vector.size} is not r(r-1)/2")
    out = np.eye(r)
    iu = np.triu_indices(r, k=1)
    out[iu] = vector
    out[(iu[1], iu[0])] = vector
    return out


def default_bandwidth(region_means_rows):
    """Median of the nonzero pairwise region-mean distances across rows."""
    x = np.atleast_2d(np.asarray(region_means_rows, dtype=float))
    iu = np.triu_indices(x.shape[1], k=1)
    d = np.abs(x[:, iu[0]] - x[:, iu[1]]).ravel()
    d = d[d > 0]
    if d.size == 0:
        raise DataError("all region means are identical; bandwidth undefined")
    return float(np.median(d))


def connectivity_features(rows, bandwidth):
    return np.vstack([vectorize_connectivity(connectivity(r, bandwidth)) for r in np.atleast_2d(rows)])


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Centering means, orthonormal directions (columns) and their variances."""

    mean: np.ndarray
    directions: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float

    @property
    def k(self):
        return self.directions.shape[1]

    def explained_ratio(self):
        return self.eigenvalues / self.total_variance

    def to_dict(self):
        return {"mean": self.mean.tolist(), "directions": self.directions.tolist(),
                "eigenvalues": self.eigenvalues.tolist(), "k": self.k,
                "total_variance": self.total_variance}

    @classmethod
    def from_dict(cls, doc):
        directions = np.asarray(doc["directions"], dtype=float).reshape(len(doc["mean"]), int(doc["k"]))
        return cls(np.asarray(doc["mean"], dtype=float), directions,
                   np.asarray(doc["eigenvalues"], dtype=float), float(doc["total_variance"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def pca_fit(x, variance_fraction=0.95, n_components=None):
    """Principal directions of the sample covariance (``1/(n-1)``).

    Retains ``n_components`` if given (clamped to the data rank), otherwise
    the fewest components whose cumulative explained variance reaches
    ``variance_fraction``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("PCA needs at least two rows")
    if x.shape[1] < 1:
        raise DataError("PCA needs at least one column")
    if n_components is None and not 0 < variance_fraction <= 1:
        raise ValueError(f"variance fraction must be in (0, 1], got {variance_fraction}")
    n, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    total = float(np.einsum("ij,ij->", xc, xc) / (n - 1))
    if total <= 1e-300 or total <= 1e-24 * float(np.max(np.abs(x)) ** 2):
        raise DataError("zero-variance data")

    if d <= n:
        vals, vecs = np.linalg.eigh(xc.T @ xc / (n - 1))
        vals, vecs = vals[::-1], vecs[:, ::-1]
    else:
        # Gram route: eigenvectors of Xc Xc^T map to directions via Xc^T u / sqrt(l).
        gvals, gvecs = np.linalg.eigh(xc @ xc.T / (n - 1))
        gvals, gvecs = gvals[::-1], gvecs[:, ::-1]
        keep = gvals > gvals[0] * 1e-12
        vals = gvals[keep]
        vecs = xc.T @ gvecs[:, keep] / np.sqrt(vals * (n - 1))
    vals = np.maximum(vals, 0.0)
    rank = int(np.sum(vals > vals[0] * 1e-12))
    vals, vecs = vals[:rank], vecs[:, :rank]

    if n_components is not None:
        k = int(n_components)
        if k < 1:
            raise ValueError("n_components must be positive")
        if k > rank:
            warnings.warn(f"n_components={k} exceeds data rank {rank}; using {rank}", stacklevel=2)
            k = rank
    else:
        cum = np.cumsum(vals) / total
        k = int(np.searchsorted(cum, variance_fraction - 1e-12) + 1)
        k = min(k, rank)
    directions = _fix_signs(vecs[:, :k])
    return PcaModel(mean, directions, vals[:k].copy(), total)


def pca_transform(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.mean.size:
        raise DataError(f"expected {model.mean.size} columns, got {x.shape[-1]}")
    return (x - model.mean) @ model.directions


def pca_inverse(model, scores):
    return model.mean + np.asarray(scores) @ model.directions.T
