import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ftdcascade.errors import DataError
from ftdcascade.features import (PcaModel, connectivity, connectivity_features, default_bandwidth,
                                 devectorize_connectivity, pca_fit, pca_inverse, pca_transform,
                                 vectorize_connectivity)


def test_connectivity_examples():
    np.testing.assert_array_equal(connectivity(np.array([2.0, 2.0, 2.0]), 1.0), 1.0)
    w = connectivity(np.array([1.0, 3.0]), 1.0)
    assert w[0, 1] == pytest.approx(np.exp(-2.0))
    assert w[0, 1] == pytest.approx(0.13534, abs=1e-5)
    with pytest.raises(ValueError):
        connectivity(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(DataError):
        connectivity(np.array([1.0]), 1.0)


@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(0, 10)), st.floats(0.1, 5.0))
def test_connectivity_properties(m, bw):
    w = connectivity(m, bw)
    assert np.array_equal(w, w.T)
    assert np.all(np.diag(w) == 1.0)
    assert np.all(w > 0) and np.all(w <= 1)
    np.testing.assert_array_equal(devectorize_connectivity(vectorize_connectivity(w)), w)


def test_connectivity_monotone_in_distance():
    m = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
    row = connectivity(m, 1.0)[0]
    assert np.all(np.diff(row) < 0)


def test_vectorize_lengths():
    assert vectorize_connectivity(np.eye(2)).shape == (1,)
    assert vectorize_connectivity(np.eye(4)).shape == (6,)
    with pytest.raises(DataError):
        devectorize_connectivity(np.ones(4))


def test_bandwidth_and_rows():
    rows = np.array([[1.0, 2.0, 4.0], [1.0, 1.0, 1.0]])
    assert default_bandwidth(rows) == 2.0
    assert connectivity_features(rows, 1.0).shape == (2, 3)
    with pytest.raises(DataError):
        default_bandwidth(np.ones((3, 4)))


def test_pca_line():
    t = np.linspace(-2, 3, 11)
    m = pca_fit(np.column_stack([t, 2 * t]), variance_fraction=0.95)
    assert m.k == 1
    np.testing.assert_allclose(m.directions[:, 0], np.array([1, 2]) / np.sqrt(5), atol=1e-12)
    assert m.eigenvalues[0] / m.total_variance == pytest.approx(1.0)


def test_pca_zero_variance():
    with pytest.raises(DataError, match="zero-variance data"):
        pca_fit(np.ones((5, 3)))


def test_pca_policy_errors():
    x = np.random.default_rng(0).normal(size=(6, 3))
    with pytest.raises(DataError):
        pca_fit(x[:1])
    for f in (0.0, 1.5):
        with pytest.raises(ValueError):
            pca_fit(x, variance_fraction=f)
    with pytest.warns(UserWarning):
        m = pca_fit(x[:3], n_components=3)
    assert m.k == 2


def test_pca_hand_covariance():
    # Zero-mean orthogonal columns with squared norms 8 and 2 give the
    # 1/(n-1) covariance diag(4, 1, 0).
    x = np.column_stack([[2.0, -2.0, 0.0], np.array([1.0, 1.0, -2.0]) / np.sqrt(3.0), [5.0, 5.0, 5.0]])
    cov = np.cov(x, rowvar=False)
    np.testing.assert_allclose(cov, np.diag([4.0, 1.0, 0.0]), atol=1e-12)
    m = pca_fit(x, variance_fraction=0.79)
    assert m.k == 1
    np.testing.assert_allclose(m.eigenvalues, [4.0], atol=1e-12)
    assert m.total_variance == pytest.approx(5.0)
    both = pca_fit(x, variance_fraction=0.81)
    assert both.k == 2
    np.testing.assert_allclose(both.eigenvalues, [4.0, 1.0], atol=1e-12)


def test_pca_transform_examples(rng):
    x = rng.normal(size=(50, 10)) @ rng.normal(size=(10, 10))
    m = pca_fit(x, n_components=10)
    s = pca_transform(m, x)
    np.testing.assert_allclose(s.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(pca_inverse(m, s), x, rtol=1e-6, atol=1e-9)
    cov = np.cov(s, rowvar=False)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 1e-8
    with pytest.raises(DataError):
        pca_transform(m, x[:, :3])


def test_pca_invariants(rng):
    x = rng.normal(size=(30, 6)) * [5, 4, 3, 2, 1, 0.5]
    m = pca_fit(x, variance_fraction=1.0)
    d = m.directions
    np.testing.assert_allclose(d.T @ d, np.eye(m.k), atol=1e-8)
    assert np.all(m.eigenvalues >= 0) and np.all(np.diff(m.eigenvalues) <= 0)
    idx = np.argmax(np.abs(d), axis=0)
    assert np.all(d[idx, np.arange(d.shape[1])] >= 0)
    assert m.eigenvalues.sum() == pytest.approx(np.var(x, axis=0, ddof=1).sum(), rel=1e-9)


def test_gram_route_matches_covariance_route(rng):
    x = rng.normal(size=(8, 20))
    wide = pca_fit(x, n_components=7)
    cov = np.cov(x, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:7]
    np.testing.assert_allclose(wide.eigenvalues, vals[order], rtol=1e-9)
    np.testing.assert_allclose(np.abs(wide.directions.T @ vecs[:, order]), np.eye(7), atol=1e-8)


def test_pca_json_round_trip(rng):
    m = pca_fit(rng.normal(size=(20, 4)))
    back = PcaModel.from_json(m.to_json())
    probe = rng.normal(size=(5, 4))
    assert np.array_equal(pca_transform(m, probe), pca_transform(back, probe))
    json.loads(m.to_json())
