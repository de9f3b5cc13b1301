import os
import subprocess
import sys

import numpy as np
import pytest

from kcmap import _kernels
from kcmap._kernels import pykernels

needs_compiled = pytest.mark.skipif(
    not _kernels.HAVE_COMPILED, reason="compiled backend not built")


def random_responses(rng, L, N, missing=0.3):
    correct = rng.integers(0, 2, size=(L, N)).astype(np.int8)
    correct[rng.random((L, N)) < missing] = -1
    position = np.empty((L, N), dtype=np.int32)
    for l in range(L):
        position[l] = rng.permutation(N)
    position[correct == -1] = -1
    return correct, position


def brute_counts(correct, position):
    L, N = correct.shape
    A = np.zeros((N, N), dtype=np.int64)
    B = np.zeros_like(A)
    C = np.zeros_like(A)
    D = np.zeros_like(A)
    for l in range(L):
        for i in range(N):
            if correct[l, i] < 0:
                continue
            for j in range(N):
                if j == i or correct[l, j] < 0:
                    continue
                if position[l, i] < position[l, j]:
                    e, t = correct[l, i], correct[l, j]
                elif position[l, j] < position[l, i]:
                    e, t = correct[l, j], correct[l, i]
                else:
                    continue
                if j < i:
                    continue
                if e and t:
                    A[i, j] += 1
                elif not e and t:
                    B[i, j] += 1
                elif e and not t:
                    C[i, j] += 1
                else:
                    D[i, j] += 1
    A = A + A.T
    B = B + B.T
    C = C + C.T
    D = D + D.T
    return A, B, C, D


class TestPairCounts:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        correct, position = random_responses(rng, 25, 8)
        got = pykernels.pair_cell_counts(correct, position)
        want = brute_counts(correct, position)
        for g, w in zip(got, want):
            assert (g == w).all()

    def test_diagonal_is_zero(self):
        rng = np.random.default_rng(1)
        correct, position = random_responses(rng, 30, 6)
        for g in pykernels.pair_cell_counts(correct, position):
            assert (np.diag(g) == 0).all()


def random_distance(rng, n, ties=False):
    v = rng.random((n, n))
    if ties:
        v = np.round(v, 1)
    v = np.triu(v, 1)
    v = v + v.T
    return np.ascontiguousarray(v)


class TestBackendParity:
    """The compiled kernels must reproduce the numpy fallback bit for bit."""

    @needs_compiled
    def test_pair_counts_identical(self):
        from kcmap._kernels import cykernels
        rng = np.random.default_rng(2)
        for L, N, miss in ((40, 12, 0.0), (60, 9, 0.4), (5, 20, 0.7),
                           (1, 4, 0.0), (80, 3, 0.2)):
            correct, position = random_responses(rng, L, N, miss)
            a = pykernels.pair_cell_counts(correct, position)
            b = cykernels.pair_cell_counts(correct, position)
            for x, y in zip(a, b):
                assert (x == y).all()

    @needs_compiled
    def test_ward_identical(self):
        from kcmap._kernels import cykernels
        rng = np.random.default_rng(3)
        for n, ties in ((2, False), (7, False), (24, False), (15, True),
                        (40, True)):
            d = random_distance(rng, n, ties)
            m1, h1 = pykernels.ward_linkage(d)
            m2, h2 = cykernels.ward_linkage(d)
            assert (m1 == m2).all()
            # bitwise: both backends evaluate the same expression tree
            assert (h1 == h2).all()

    @needs_compiled
    def test_bkt_identical(self):
        from kcmap._kernels import cykernels
        rng = np.random.default_rng(4)
        for L, K, N in ((20, 3, 12), (7, 1, 5), (50, 6, 6)):
            sizes = np.bincount(rng.integers(0, K, size=N - K),
                                minlength=K) + 1
            kc_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int32)
            position = rng.permutation(N).astype(np.int32)
            ranks_flat = np.concatenate(
                [np.sort(position[kc_ptr[k]:kc_ptr[k + 1]])
                 for k in range(K)]).astype(np.int32)
            uniforms = rng.random((L, K + 2 * N))
            rates = rng.random((L, K))
            a = pykernels.bkt_responses(uniforms, rates, kc_ptr, ranks_flat,
                                        0.2, 0.1, 0.15)
            b = cykernels.bkt_responses(uniforms, rates, kc_ptr, ranks_flat,
                                        0.2, 0.1, 0.15)
            assert (a[0] == b[0]).all()
            assert (a[1] == b[1]).all()


class TestDispatch:
    def test_backend_reported(self):
        assert _kernels.BACKEND in ("compiled", "numpy")
        assert _kernels.HAVE_COMPILED == (_kernels.BACKEND == "compiled")

    def test_env_var_forces_fallback(self):
        env = dict(os.environ, KCMAP_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c",
             "from kcmap import _kernels; print(_kernels.BACKEND)"],
            capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "numpy"
