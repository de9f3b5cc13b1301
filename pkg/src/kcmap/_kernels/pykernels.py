"""Numpy reference implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable and
the ground truth the extension is tested against: both engines must return
bit-identical results. Float expressions are therefore written with the
exact same operation order as their C counterparts (and the extension is
compiled with -ffp-contract=off), and all counting is integer-exact.
"""

import numpy as np

_LEARNER_CHUNK = 128  # bounds the (chunk, N, N) orientation tensor to a few MB


def pair_cell_counts(correct, position):
    """Per-pair contingency cells over all item pairs, order-aware.

    correct  : int8 (L, N), 1 correct / 0 incorrect / -1 not answered
    position : int32 (L, N), presentation index per learner, -1 where missing

    For each unordered pair and each learner who answered both items, the
    learner falls in exactly one cell based on the item presented earlier
    (E) and later (L) to that learner:

        a: E correct,   L correct      b: E incorrect, L correct
        c: E correct,   L incorrect    d: E incorrect, L incorrect

    Returns (A, B, C, D) as symmetric int64 (N, N) matrices with zero
    diagonals.
    """
    L, N = correct.shape
    right = (correct == 1).astype(np.int64)
    wrong = (correct == 0).astype(np.int64)

    A = right.T @ right
    D = wrong.T @ wrong
    # Orientation-dependent cells: accumulate "i earlier than j" crosses in
    # learner chunks, then fold in the mirrored orientation.
    x_lt = np.zeros((N, N), dtype=np.int64)  # i earlier, i wrong, j right
    y_lt = np.zeros((N, N), dtype=np.int64)  # i earlier, i right, j wrong
    for s in range(0, L, _LEARNER_CHUNK):
        e = min(s + _LEARNER_CHUNK, L)
        earlier = (position[s:e, :, None] < position[s:e, None, :]).astype(np.int8)
        x_lt += np.einsum("li,lj,lij->ij", wrong[s:e], right[s:e], earlier)
        y_lt += np.einsum("li,lj,lij->ij", right[s:e], wrong[s:e], earlier)
    B = x_lt + x_lt.T
    C = y_lt + y_lt.T
    for m in (A, B, C, D):
        np.fill_diagonal(m, 0)
    return A, B, C, D


def ward_linkage(dist):
    """Agglomerative Ward merge sequence from a symmetric distance matrix.

    Lance-Williams recurrence on squared dissimilarities, reported heights
    square-rooted (the "ward.D2" convention). Ties in the minimum-distance
    scan resolve to the lowest (i, j) slot pair; a cluster's slot is the
    smallest original item index it contains, so tie-breaking is by lowest
    item index pair.

    Returns (merges, heights): merges is int64 (N-1, 2) holding cluster ids
    (originals 0..N-1, the t-th merge creates id N+t), heights float64.
    """
    d2 = np.square(np.asarray(dist, dtype=np.float64))
    n = d2.shape[0]
    merges = np.empty((n - 1, 2), dtype=np.int64)
    heights = np.empty(n - 1, dtype=np.float64)
    sizes = np.ones(n, dtype=np.float64)
    ids = np.arange(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    for t in range(n - 1):
        mask = upper & active[:, None] & active[None, :]
        flat = np.where(mask, d2, np.inf).argmin()
        i, j = divmod(int(flat), n)
        dij = d2[i, j]
        merges[t, 0] = ids[i]
        merges[t, 1] = ids[j]
        heights[t] = np.sqrt(dij)

        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        ni, nj = sizes[i], sizes[j]
        nx = sizes[others]
        upd = ((ni + nx) * d2[i, others] + (nj + nx) * d2[j, others] - nx * dij) \
            / (ni + nj + nx)
        d2[i, others] = upd
        d2[others, i] = upd
        sizes[i] = ni + nj
        ids[i] = n + t
        active[j] = False
    return merges, heights


def bkt_responses(uniforms, rates, kc_ptr, ranks_flat, p_guess, p_slip, p_l0):
    """Emit correctness rows for all learners from pre-drawn uniforms.

    uniforms   : float64 (L, K + 2N); per learner the block for knowledge
                 component k is [u_init, (u_emit, u_learn) * m_k] laid out
                 consecutively in component order.
    rates      : float64 (L, K) per-learner-per-component learn probability
    kc_ptr     : int32 (K+1,) CSR offsets into ranks_flat
    ranks_flat : int32 (N,) presentation ranks of each component's items,
                 in presentation order
    Returns (responses int8 (L, N) indexed by presentation rank,
             onset int32 (L, K): within-component index of the first item
             answered in the mastered state, m_k if no item was).
    """
    L = uniforms.shape[0]
    K = kc_ptr.shape[0] - 1
    N = ranks_flat.shape[0]
    resp = np.zeros((L, N), dtype=np.int8)
    onset = np.zeros((L, K), dtype=np.int32)
    p_known = 1.0 - p_slip

    off = 0
    for k in range(K):
        m = int(kc_ptr[k + 1] - kc_ptr[k])
        mastered = uniforms[:, off] < p_l0
        onset[:, k] = np.where(mastered, 0, m)
        for t in range(m):
            rank = int(ranks_flat[kc_ptr[k] + t])
            u_emit = uniforms[:, off + 1 + 2 * t]
            thresh = np.where(mastered, p_known, p_guess)
            resp[:, rank] = u_emit < thresh
            u_learn = uniforms[:, off + 2 + 2 * t]
            newly = ~mastered & (u_learn < rates[:, k])
            onset[newly, k] = t + 1
            mastered = mastered | newly
        off += 1 + 2 * m
    return resp, onset
