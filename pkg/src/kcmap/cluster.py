"""Item-based distances from similarity rows, Ward clustering, K-means.

The distance between items i and j compares rows i and j of the similarity
matrix over the coordinates where both rows are defined, always excluding
coordinates i and j themselves. Pairs with fewer than 3 usable coordinates
(or zero variance under the correlation metric) get the median of the
defined distances as a fallback, which is logged.
"""

import csv
import json
import logging

import numpy as np

from . import _kernels
from .errors import DataError
from .similarity import SimilarityMatrix

log = logging.getLogger(__name__)

METRICS = ("pearson_distance", "euclidean")
MIN_OVERLAP = 3
KMEANS_MAX_ITER = 300

# variance below this (per compared coordinate) is treated as zero; real
# similarity columns vary on a much coarser scale than float cancellation
_VAR_FLOOR = 1e-10


class DistanceMatrix:
    def __init__(self, items, values, metric):
        self.items = list(items)
        self.values = np.asarray(values, dtype=np.float64)
        self.metric = metric

    @property
    def n_items(self):
        return len(self.items)

    def save_csv(self, path, header_comment=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write("# %s\n" % header_comment)
            w = csv.writer(fh)
            w.writerow(["item_id"] + self.items)
            for i, it in enumerate(self.items):
                w.writerow([it] + [repr(float(v)) for v in self.values[i]])

    def to_json(self):
        return {
            "format": "kcmap-distance",
            "version": 1,
            "metric": self.metric,
            "items": self.items,
            "values": [[float(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != "kcmap-distance":
            raise DataError("not a serialized distance matrix")
        vals = np.array(obj["values"], dtype=np.float64)
        if vals.size == 0:
            vals = vals.reshape(0, 0)
        return cls(obj["items"], vals, obj["metric"])

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")


def load_distance_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return DistanceMatrix.from_json(json.load(fh))


def impute_features(m1):
    """Similarity rows as finite feature vectors: diagonal 1, undefined 0."""
    X = np.array(m1.values, dtype=np.float64, copy=True)
    np.fill_diagonal(X, 1.0)
    X[np.isnan(X)] = 0.0
    return X


def _masked_rows(values, defined):
    """Zero-filled values and float mask with zeroed diagonals.

    Killing the diagonal of the mask is exactly the "exclude coordinates i
    and j" rule: for the pair (i, j), coordinate t=i passes through
    W[i, i] and coordinate t=j through W[j, j], while pairs not involving
    t keep their use of coordinate t intact.
    """
    X = np.where(defined, values, 0.0)
    W = defined.astype(np.float64)
    np.fill_diagonal(X, 0.0)
    np.fill_diagonal(W, 0.0)
    return X, W


def _euclid_sq(X, W):
    # exact masked sum of squared row differences; chunked so the
    # (chunk, n, n) temporaries stay small
    n = X.shape[0]
    out = np.empty((n, n))
    chunk = max(1, 4_000_000 // max(n * n, 1))
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        d = X[s:e, None, :] - X[None, :, :]
        m = W[s:e, None, :] * W[None, :, :]
        out[s:e] = np.einsum("cnt,cnt,cnt->cn", d, d, m)
    return out


def _distance_core(values, defined, metric):
    n = values.shape[0]
    X, W = _masked_rows(values, defined)
    O = W @ W.T
    with np.errstate(divide="ignore", invalid="ignore"):
        if metric == "euclidean":
            D = np.sqrt(_euclid_sq(X, W) / O)
            bad = O < MIN_OVERLAP
        elif metric == "pearson_distance":
            Sx = X @ W.T
            Sy = W @ X.T
            X2 = X * X
            Sxx = X2 @ W.T
            Syy = W @ X2.T
            Sxy = X @ X.T
            vx = Sxx - Sx * Sx / O
            vy = Syy - Sy * Sy / O
            cov = Sxy - Sx * Sy / O
            r = np.clip(cov / np.sqrt(vx * vy), -1.0, 1.0)
            D = 1.0 - r
            bad = (O < MIN_OVERLAP) | (vx <= _VAR_FLOOR * O) | (vy <= _VAR_FLOOR * O)
        else:
            raise ValueError("unknown metric %r" % (metric,))
    off = ~np.eye(n, dtype=bool)
    n_bad = int(np.count_nonzero(bad & off)) // 2
    if n_bad:
        good = D[~bad & np.triu(off)]
        if good.size == 0:
            raise ValueError(
                "no item pair has %d overlapping coordinates; "
                "distance matrix is undefined" % MIN_OVERLAP)
        D = np.where(bad, np.median(good), D)
        log.warning("%s: %d item pairs lacked overlap or variance; "
                    "median fallback %.6g used", metric, n_bad, np.median(good))
    # exact symmetry and a clean diagonal
    D = np.triu(D, 1)
    D = D + D.T
    return D


def item_distance(m1, metric="pearson_distance"):
    """Item x item DistanceMatrix from a SimilarityMatrix's rows."""
    values = np.array(m1.values, dtype=np.float64, copy=True)
    np.fill_diagonal(values, 1.0)
    return DistanceMatrix(
        m1.items, _distance_core(values, ~np.isnan(values), metric), metric)


def row_feature_distances(features, metric):
    """Distance matrix between rows of a dense feature matrix.

    Same pairwise rule as item_distance (coordinates i and j excluded),
    with every entry defined.
    """
    X = np.asarray(features, dtype=np.float64)
    return _distance_core(X, np.ones(X.shape, dtype=bool), metric)


class Clustering:
    """An item -> cluster assignment plus per-method bookkeeping."""

    def __init__(self, items, assignment, k, method):
        self.items = list(items)
        self.assignment = np.asarray(assignment, dtype=np.int32)
        self.k = int(k)
        self.method = method
        self.merges = None
        self.heights = None
        self.restart_sse = None
        self.restart_assignments = None
        self.restart_reseeds = None
        self.best_restart = None

    def labels(self):
        return dict(zip(self.items, (int(c) for c in self.assignment)))

    def clusters(self):
        out = {}
        for it, c in zip(self.items, self.assignment):
            out.setdefault(int(c), []).append(it)
        return out

    def save_csv(self, path, header_comment=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write("# %s\n" % header_comment)
            w = csv.writer(fh)
            w.writerow(["item_id", "cluster"])
            for it, c in zip(self.items, self.assignment):
                w.writerow([it, int(c)])

    def tree_json(self):
        if self.merges is None:
            raise ValueError("no merge tree recorded for %s" % self.method)
        return {
            "format": "kcmap-merge-tree",
            "version": 1,
            "items": self.items,
            "merges": [[int(a), int(b)] for a, b in self.merges],
            "heights": [float(h) for h in self.heights],
        }


def load_clustering_csv(path):
    items, assignment = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != ["item_id", "cluster"]:
        raise DataError("%s: expected header item_id,cluster" % (path,))
    for row in reader:
        if not row:
            continue
        items.append(row[0])
        assignment.append(int(row[1]))
    k = len(set(assignment)) if assignment else 0
    return Clustering(items, assignment, k, "file")


def cut_merges(merges, n, k):
    """Labels for the k-cluster cut of a merge sequence over n leaves.

    Clusters are numbered 0..k-1 in order of their smallest item index.
    """
    comp = {i: [i] for i in range(n)}
    for t in range(n - k):
        a, b = int(merges[t, 0]), int(merges[t, 1])
        comp[n + t] = comp.pop(a) + comp.pop(b)
    labels = np.empty(n, dtype=np.int32)
    for ci, members in enumerate(sorted(comp.values(), key=min)):
        labels[members] = ci
    return labels


def ward_tree(values):
    """Merge sequence + heights for a symmetric distance matrix."""
    V = np.ascontiguousarray(values, dtype=np.float64)
    return _kernels.ward_linkage(V)


def ward_cluster(d, k):
    """Ward agglomeration of a DistanceMatrix, cut at k clusters."""
    n = d.n_items
    if not 1 <= k <= n:
        raise ValueError("k must be in [1, %d], got %d" % (n, k))
    merges, heights = ward_tree(d.values)
    c = Clustering(d.items, cut_merges(merges, n, k), k, "ward")
    c.merges = merges
    c.heights = heights
    return c


def _lloyd(X, init_idx, max_iter=KMEANS_MAX_ITER):
    """One K-means run from explicit initial center rows.

    Returns (assignment, sse, n_reseeds, sse_history). An emptied cluster is
    reseeded with the point farthest from its stale center (points already
    taken in the same repair round are skipped), so every run ends with k
    non-empty clusters.
    """
    n = X.shape[0]
    k = len(init_idx)
    centers = X[np.asarray(init_idx)].copy()
    assignment = None
    n_reseeds = 0
    history = []
    x2 = np.einsum("ij,ij->i", X, X)
    for _ in range(max_iter):
        c2 = np.einsum("ij,ij->i", centers, centers)
        d2 = x2[:, None] - 2.0 * (X @ centers.T) + c2[None, :]
        new_assignment = np.argmin(d2, axis=1).astype(np.int32)
        counts = np.bincount(new_assignment, minlength=k)
        if np.any(counts == 0):
            available = np.ones(n, dtype=bool)
            for c in np.flatnonzero(counts == 0):
                cand = np.where(available, d2[:, c], -np.inf)
                p = int(np.argmax(cand))
                new_assignment[p] = c
                available[p] = False
                n_reseeds += 1
            counts = np.bincount(new_assignment, minlength=k)
        history.append(float(d2[np.arange(n), new_assignment].sum()))
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        sums = np.zeros((k, X.shape[1]))
        np.add.at(sums, assignment, X)
        centers = sums / counts[:, None]
    sse = float(((X - centers[assignment]) ** 2).sum())
    return assignment, sse, n_reseeds, history


def kmeans_cluster(features, k, *, seed, restarts=100, max_iter=KMEANS_MAX_ITER):
    """Restarted Lloyd K-means on similarity rows (or any feature matrix).

    features may be a SimilarityMatrix (rows imputed: diagonal 1, undefined
    to 0) or a dense array. Initial centers are k distinct rows sampled by
    each restart's own child RNG stream, so results depend only on (data,
    seed, restarts). The best restart is the one with the lowest final sum
    of squared distances, earliest index winning ties; all restarts'
    assignments are kept for distribution reporting.
    """
    if isinstance(features, SimilarityMatrix):
        items = features.items
        X = impute_features(features)
    else:
        X = np.asarray(features, dtype=np.float64)
        items = list(range(X.shape[0]))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError("k must be in [1, %d], got %d" % (n, k))
    if restarts < 1:
        raise ValueError("restarts must be positive")
    children = np.random.SeedSequence(seed).spawn(restarts)
    all_assignments = np.empty((restarts, n), dtype=np.int32)
    all_sse = np.empty(restarts, dtype=np.float64)
    all_reseeds = np.zeros(restarts, dtype=np.int32)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(children[r])
        init_idx = rng.choice(n, size=k, replace=False)
        assignment, sse, reseeds, _ = _lloyd(X, init_idx, max_iter)
        all_assignments[r] = assignment
        all_sse[r] = sse
        all_reseeds[r] = reseeds
        if best is None or sse < all_sse[best]:
            best = r
    c = Clustering(items, all_assignments[best], k, "kmeans")
    c.restart_sse = all_sse
    c.restart_assignments = all_assignments
    c.restart_reseeds = all_reseeds
    c.best_restart = int(best)
    return c
