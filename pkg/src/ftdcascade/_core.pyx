# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature and the same floating-point operation order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, pow, sqrt, INFINITY

cnp.import_array()


def smo_solve(const double[:, ::1] K, const double[::1] y, double C, double tol,
              long max_iter):
    """Linear-kernel soft-margin dual via maximal-violating-pair SMO.

    Returns ``(alpha, b, n_iter, converged)``.
    """
    cdef Py_ssize_t n = K.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double gmax, gmin, v, quad, delta, diff, total
    cdef double ai_old, aj_old, yi_dai, yj_daj
    cdef long it = 0
    cdef bint converged = False
    alpha_arr = np.zeros(n)
    grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = grad_arr

    while it < max_iter:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        it += 1

        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        yi_dai = y[i] * (alpha[i] - ai_old)
        yj_daj = y[j] * (alpha[j] - aj_old)
        for t in range(n):
            G[t] += y[t] * (yi_dai * K[t, i] + yj_daj * K[t, j])

    return alpha_arr, _smo_bias(alpha, G, y, C), it, converged


cdef double _smo_bias(double[::1] alpha, double[::1] G, const double[::1] y,
                      double C):
    cdef Py_ssize_t t, n = alpha.shape[0]
    cdef double ub = INFINITY, lb = -INFINITY, free_sum = 0.0, yg
    cdef long n_free = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            free_sum += yg
    if n_free > 0:
        return -(free_sum / n_free)
    return -((ub + lb) / 2.0)


cdef inline double _dot3(double ax, double ay, double az,
                         double bx, double by, double bz):
    return ax * bx + ay * by + az * bz


cdef double _point_triangle_sq(double px, double py, double pz,
                               const double[:, ::1] A, const double[:, ::1] B,
                               const double[:, ::1] Cv, Py_ssize_t k):
    # Closest point by Voronoi-region tests (Ericson, Real-Time Collision Detection 5.1.5).
    cdef double abx = B[k, 0] - A[k, 0], aby = B[k, 1] - A[k, 1], abz = B[k, 2] - A[k, 2]
    cdef double acx = Cv[k, 0] - A[k, 0], acy = Cv[k, 1] - A[k, 1], acz = Cv[k, 2] - A[k, 2]
    cdef double apx = px - A[k, 0], apy = py - A[k, 1], apz = pz - A[k, 2]
    cdef double d1 = _dot3(abx, aby, abz, apx, apy, apz)
    cdef double d2 = _dot3(acx, acy, acz, apx, apy, apz)
    cdef double qx, qy, qz, v, w, denom
    cdef double bpx, bpy, bpz, cpx, cpy, cpz, d3, d4, d5, d6, va, vb, vc
    if d1 <= 0.0 and d2 <= 0.0:
        qx = A[k, 0]; qy = A[k, 1]; qz = A[k, 2]
    else:
        bpx = px - B[k, 0]; bpy = py - B[k, 1]; bpz = pz - B[k, 2]
        d3 = _dot3(abx, aby, abz, bpx, bpy, bpz)
        d4 = _dot3(acx, acy, acz, bpx, bpy, bpz)
        vc = d1 * d4 - d3 * d2
        cpx = px - Cv[k, 0]; cpy = py - Cv[k, 1]; cpz = pz - Cv[k, 2]
        d5 = _dot3(abx, aby, abz, cpx, cpy, cpz)
        d6 = _dot3(acx, acy, acz, cpx, cpy, cpz)
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if d3 >= 0.0 and d4 <= d3:
            qx = B[k, 0]; qy = B[k, 1]; qz = B[k, 2]
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            v = d1 / (d1 - d3)
            qx = A[k, 0] + v * abx; qy = A[k, 1] + v * aby; qz = A[k, 2] + v * abz
        elif d6 >= 0.0 and d5 <= d6:
            qx = Cv[k, 0]; qy = Cv[k, 1]; qz = Cv[k, 2]
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            w = d2 / (d2 - d6)
            qx = A[k, 0] + w * acx; qy = A[k, 1] + w * acy; qz = A[k, 2] + w * acz
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            qx = B[k, 0] + w * (Cv[k, 0] - B[k, 0])
            qy = B[k, 1] + w * (Cv[k, 1] - B[k, 1])
            qz = B[k, 2] + w * (Cv[k, 2] - B[k, 2])
        else:
            denom = 1.0 / (va + vb + vc)
            v = vb * denom
            w = vc * denom
            qx = A[k, 0] + abx * v + acx * w
            qy = A[k, 1] + aby * v + acy * w
            qz = A[k, 2] + abz * v + acz * w
    qx -= px; qy -= py; qz -= pz
    return qx * qx + qy * qy + qz * qz


def nearest_triangle_distance(const double[:, ::1] points, const double[:, ::1] A,
                              const double[:, ::1] B, const double[:, ::1] Cv,
                              const long[::1] indptr, const long[::1] indices):
    """Minimum point-to-triangle distance over each point's candidate list."""
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t p, s
    cdef double best, d
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    for p in range(m):
        best = INFINITY
        for s in range(indptr[p], indptr[p + 1]):
            d = _point_triangle_sq(points[p, 0], points[p, 1], points[p, 2],
                                   A, B, Cv, indices[s])
            if d < best:
                best = d
        out[p] = sqrt(best)
    return out_arr


def susan_sums(const double[::1] values, const long[::1] indptr, const long[::1] indices,
               const double[::1] dist, double sigma, double t, double exponent):
    """Weighted numerator and denominator of the SUSAN average per vertex."""
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t v0, s
    cdef double num, den, w, r, p, c0, inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef int k, ie = <int>exponent
    cdef bint integral = ie == exponent and 0 < ie <= 16
    num_arr = np.zeros(n)
    den_arr = np.zeros(n)
    cdef double[::1] nums = num_arr
    cdef double[::1] dens = den_arr
    for v0 in range(n):
        num = 0.0
        den = 0.0
        c0 = values[v0]
        for s in range(indptr[v0], indptr[v0 + 1]):
            r = fabs((values[indices[s]] - c0) / t)
            if integral:
                p = r
                for k in range(1, ie):
                    p *= r
            else:
                p = pow(r, exponent)
            w = exp(-((dist[s] * dist[s]) * inv2s2 + p))
            num += values[indices[s]] * w
            den += w
        nums[v0] = num
        dens[v0] = den
    return num_arr, den_arr
