"""Pure-numpy versions of the compiled kernels in ``_core.pyx``."""
import numpy as np


def smo_solve(K, y, C, tol, max_iter):
    """Linear-kernel soft-margin dual via maximal-violating-pair SMO.

    Returns ``(alpha, b, n_iter, converged)``.
    """
    n = K.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        v = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] < tol:
            converged = True
            break
        it += 1

        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = ai_old, aj_old
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj

        yi_dai = y[i] * (ai - ai_old)
        yj_daj = y[j] * (aj - aj_old)
        G += y * (yi_dai * K[:, i] + yj_daj * K[:, j])

    return alpha, _smo_bias(alpha, G, y, C), it, converged


def _smo_bias(alpha, G, y, C):
    yg = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return -float(np.mean(yg[free]))
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return -float((ub + lb) / 2.0)


def _closest_sq(p, a, b, c):
    """Squared distance from rows of ``p`` to triangles (a, b, c), row-wise."""
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        q = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]
        # Regions are applied last-to-first so earlier tests take precedence.
        e = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        q[m] = (b + (c - b) * e[:, None])[m]
        w = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        q[m] = (a + ac * w[:, None])[m]
        m = (d6 >= 0) & (d5 <= d6)
        q[m] = c[m]
        v = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        q[m] = (a + ab * v[:, None])[m]
        m = (d3 >= 0) & (d4 <= d3)
        q[m] = b[m]
        m = (d1 <= 0) & (d2 <= 0)
        q[m] = a[m]
    diff = q - p
    return np.einsum("ij,ij->i", diff, diff)


def nearest_triangle_distance(points, A, B, C, indptr, indices):
    """Minimum point-to-triangle distance over each point's candidate list."""
    m = points.shape[0]
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(m), counts)
    out = np.full(m, np.inf)
    chunk = 1 << 18
    for start in range(0, indices.size, chunk):
        sl = slice(start, start + chunk)
        tri = indices[sl]
        d = _closest_sq(points[owner[sl]], A[tri], B[tri], C[tri])
        np.minimum.at(out, owner[sl], d)
    return np.sqrt(out)


def susan_sums(values, indptr, indices, dist, sigma, t, exponent):
    """Weighted numerator and denominator of the SUSAN average per vertex."""
    n = values.size
    owner = np.repeat(np.arange(n), np.diff(indptr))
    nb = values[indices]
    r = np.abs((nb - values[owner]) / t)
    ie = int(exponent)
    if ie == exponent and 0 < ie <= 16:
        p = r.copy()
        for _ in range(1, ie):
            p *= r
    else:
        p = r ** exponent
    w = np.exp(-((dist * dist) * (1.0 / (2.0 * sigma * sigma)) + p))
    num = np.bincount(owner, weights=nb * w, minlength=n)
    den = np.bincount(owner, weights=w, minlength=n)
    return num, den
