"""Independent reference implementations used only by the tests."""
import itertools

import numpy as np


def svm_dual_qp(x, y, C):
    """Soft-margin linear SVM dual solved by cvxopt's interior-point QP.

    Returns ``(alpha, objective)`` with the objective in maximization form.
    """
    from cvxopt import matrix, solvers
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * (x @ x.T) + 1e-12 * np.eye(n)
    G = np.vstack([-np.eye(n), np.eye(n)])
    h = np.r_[np.zeros(n), np.full(n, C)]
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12}
    sol = solvers.qp(matrix(Q), matrix(-np.ones(n)), matrix(G), matrix(h),
                     matrix(y[None, :]), matrix(0.0), options=opts)
    alpha = np.clip(np.array(sol["x"]).ravel(), 0.0, C)
    w = (alpha * y) @ x
    return alpha, float(alpha.sum() - 0.5 * w @ w)


def best_linear_accuracy(x, y):
    """Best training accuracy of any line in 2-D, by enumerating separators
    through point pairs (shifted slightly each way) and all-one-side rules."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=bool)
    best = max(y.mean(), 1 - y.mean())
    for i, j in itertools.combinations(range(len(x)), 2):
        d = x[j] - x[i]
        normal = np.array([-d[1], d[0]])
        for eps in (-1e-6, 1e-6):
            for sign in (1, -1):
                s = sign * ((x - x[i]) @ normal + eps)
                best = max(best, np.mean((s > 0) == y))
    return best


def point_triangle_qp(p, a, b, c):
    """Distance from p to triangle abc: minimize |a + u(b-a) + v(c-a) - p|^2
    over u, v >= 0, u + v <= 1 with cvxopt."""
    from cvxopt import matrix, solvers
    E = np.column_stack([b - a, c - a])
    r = a - p
    P = 2.0 * E.T @ E + 1e-14 * np.eye(2)
    q = 2.0 * E.T @ r
    G = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
    h = np.array([0.0, 0.0, 1.0])
    opts = {"show_progress": False, "abstol": 1e-14, "reltol": 1e-14, "feastol": 1e-14}
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h), options=opts)
    u, v = np.array(sol["x"]).ravel()
    u, v = max(u, 0.0), max(v, 0.0)
    if u + v > 1:
        u, v = u / (u + v), v / (u + v)
    return float(np.linalg.norm(r + E @ np.array([u, v])))
