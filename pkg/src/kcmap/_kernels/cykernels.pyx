# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in pykernels.py.

Same contracts, same arithmetic expression trees. The build passes
-ffp-contract=off so float results stay bit-identical to the numpy path;
the parity test suite holds both engines to exact equality.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()


def pair_cell_counts(const signed char[:, ::1] correct,
                     const int[:, ::1] position):
    cdef Py_ssize_t L = correct.shape[0]
    cdef Py_ssize_t N = correct.shape[1]
    A_arr = np.zeros((N, N), dtype=np.int64)
    B_arr = np.zeros((N, N), dtype=np.int64)
    C_arr = np.zeros((N, N), dtype=np.int64)
    D_arr = np.zeros((N, N), dtype=np.int64)
    cdef long long[:, ::1] A = A_arr
    cdef long long[:, ::1] B = B_arr
    cdef long long[:, ::1] C = C_arr
    cdef long long[:, ::1] D = D_arr
    cdef Py_ssize_t l, i, j
    cdef signed char ci, cj
    cdef int pi, pj

    with nogil:
        for l in range(L):
            for i in range(N):
                ci = correct[l, i]
                if ci < 0:
                    continue
                pi = position[l, i]
                for j in range(i + 1, N):
                    cj = correct[l, j]
                    if cj < 0:
                        continue
                    pj = position[l, j]
                    if ci == 1 and cj == 1:
                        A[i, j] += 1
                    elif ci == 0 and cj == 0:
                        D[i, j] += 1
                    elif pi < pj:
                        # i shown earlier
                        if ci == 0:
                            B[i, j] += 1
                        else:
                            C[i, j] += 1
                    elif pj < pi:
                        if cj == 0:
                            B[i, j] += 1
                        else:
                            C[i, j] += 1
    # upper triangle was filled; complete the symmetric matrices
    return A_arr + A_arr.T, B_arr + B_arr.T, C_arr + C_arr.T, D_arr + D_arr.T


def ward_linkage(const double[:, ::1] dist):
    cdef Py_ssize_t n = dist.shape[0]
    d2_arr = np.empty((n, n), dtype=np.float64)
    merges_arr = np.empty((n - 1, 2), dtype=np.int64)
    heights_arr = np.empty(n - 1, dtype=np.float64)
    sizes_arr = np.ones(n, dtype=np.float64)
    ids_arr = np.arange(n, dtype=np.int64)
    active_arr = np.ones(n, dtype=np.uint8)
    cdef double[:, ::1] d2 = d2_arr
    cdef long long[:, ::1] merges = merges_arr
    cdef double[::1] heights = heights_arr
    cdef double[::1] sizes = sizes_arr
    cdef long long[::1] ids = ids_arr
    cdef unsigned char[::1] active = active_arr
    cdef Py_ssize_t t, i, j, x, bi, bj
    cdef double v, best, dij, ni, nj, nx

    with nogil:
        for i in range(n):
            for j in range(n):
                v = dist[i, j]
                d2[i, j] = v * v

        for t in range(n - 1):
            best = INFINITY
            bi = 0
            bj = 0
            for i in range(n):
                if not active[i]:
                    continue
                for j in range(i + 1, n):
                    if active[j] and d2[i, j] < best:
                        best = d2[i, j]
                        bi = i
                        bj = j
            i = bi
            j = bj
            dij = d2[i, j]
            merges[t, 0] = ids[i]
            merges[t, 1] = ids[j]
            heights[t] = sqrt(dij)

            ni = sizes[i]
            nj = sizes[j]
            for x in range(n):
                if not active[x] or x == i or x == j:
                    continue
                nx = sizes[x]
                v = ((ni + nx) * d2[i, x] + (nj + nx) * d2[j, x] - nx * dij) \
                    / (ni + nj + nx)
                d2[i, x] = v
                d2[x, i] = v
            sizes[i] = ni + nj
            ids[i] = n + t
            active[j] = 0
    return merges_arr, heights_arr


def bkt_responses(const double[:, ::1] uniforms,
                  const double[:, ::1] rates,
                  const int[::1] kc_ptr,
                  const int[::1] ranks_flat,
                  double p_guess, double p_slip, double p_l0):
    cdef Py_ssize_t L = uniforms.shape[0]
    cdef Py_ssize_t K = kc_ptr.shape[0] - 1
    cdef Py_ssize_t N = ranks_flat.shape[0]
    resp_arr = np.zeros((L, N), dtype=np.int8)
    onset_arr = np.zeros((L, K), dtype=np.int32)
    cdef signed char[:, ::1] resp = resp_arr
    cdef int[:, ::1] onset = onset_arr
    cdef double p_known = 1.0 - p_slip
    cdef Py_ssize_t l, k, t, off, m, rank
    cdef bint mastered
    cdef double thresh

    with nogil:
        for l in range(L):
            off = 0
            for k in range(K):
                m = kc_ptr[k + 1] - kc_ptr[k]
                mastered = uniforms[l, off] < p_l0
                onset[l, k] = 0 if mastered else <int>m
                for t in range(m):
                    rank = ranks_flat[kc_ptr[k] + t]
                    thresh = p_known if mastered else p_guess
                    resp[l, rank] = uniforms[l, off + 1 + 2 * t] < thresh
                    if not mastered and uniforms[l, off + 2 + 2 * t] < rates[l, k]:
                        onset[l, k] = <int>(t + 1)
                        mastered = True
                off += 1 + 2 * m
    return resp_arr, onset_arr
