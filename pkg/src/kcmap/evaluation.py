"""Clustering evaluation: ARI, within-cluster scatter, Gap statistic.

ARI is computed as Cohen's Kappa of the pair-level contingency table (over
all unordered item pairs: co-clustered in both / in one / in neither),
which coincides with the classical adjusted Rand index. The Gap statistic
clusters the same representation as the main pipeline (similarity rows,
configured distance and Ward linkage) on the real data and on B uniform
reference draws, and reports gap(k) with one-standard-error bands.
"""

import csv
import json
from typing import NamedTuple

import numpy as np

from .cluster import (
    Clustering,
    cut_merges,
    impute_features,
    item_distance,
    row_feature_distances,
    ward_tree,
)
from .errors import DataError
from .similarity import ContingencyTable, reference_measure

SELECTION_RULES = ("first_max", "first_se_max")


def _as_label_map(c):
    if isinstance(c, Clustering):
        return c.labels()
    if isinstance(c, dict):
        return c
    raise TypeError("expected a Clustering or an item->label mapping")


def pair_contingency(x, y):
    """Pair agreement counts between two label arrays over one item set.

    a: co-clustered in both; b: co-clustered in x only; c: in y only;
    d: separated in both.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    iu = np.triu_indices(len(x), k=1)
    sx = (x[:, None] == x[None, :])[iu]
    sy = (y[:, None] == y[None, :])[iu]
    a = int(np.count_nonzero(sx & sy))
    b = int(np.count_nonzero(sx & ~sy))
    c = int(np.count_nonzero(~sx & sy))
    d = int(np.count_nonzero(~sx & ~sy))
    return ContingencyTable(a, b, c, d)


def ari(c1, c2):
    """Adjusted Rand Index between two labelings of (mostly) the same items.

    Items present in only one labeling are dropped first; disjoint item
    sets are an error. Two labelings that agree on every pair score 1.
    """
    m1 = _as_label_map(c1)
    m2 = _as_label_map(c2)
    common = sorted(set(m1) & set(m2))
    if not common:
        raise ValueError("labelings share no items")
    x = [m1[i] for i in common]
    y = [m2[i] for i in common]
    t = pair_contingency(x, y)
    if t.b == 0 and t.c == 0:
        return 1.0
    return reference_measure(t, "kappa")


def wss(d, c):
    """Within-cluster scatter: sum over clusters of mean pairwise d^2 / 2.

    Accepts a DistanceMatrix (aligned to the clustering by item id) or a
    plain square array (aligned by position).
    """
    values = d if isinstance(d, np.ndarray) else d.values
    if isinstance(d, np.ndarray):
        assignment = np.asarray(c.assignment if isinstance(c, Clustering) else c)
    else:
        lab = _as_label_map(c)
        try:
            assignment = np.array([lab[i] for i in d.items])
        except KeyError as e:
            raise ValueError("clustering does not cover item %r" % (e.args[0],))
    total = 0.0
    for g in np.unique(assignment):
        idx = np.flatnonzero(assignment == g)
        sub = values[np.ix_(idx, idx)]
        total += float((sub * sub).sum()) / (2.0 * len(idx))
    return total


class GapProfile(NamedTuple):
    ks: np.ndarray
    log_wss: np.ndarray
    expected_log_wss: np.ndarray
    gap: np.ndarray
    se: np.ndarray
    B: int

    def save_csv(self, path, header_comment=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write("# %s\n" % header_comment)
            w = csv.writer(fh)
            w.writerow(["k", "logW", "ElogW", "gap", "se"])
            for i, k in enumerate(self.ks):
                w.writerow([int(k), repr(float(self.log_wss[i])),
                            repr(float(self.expected_log_wss[i])),
                            repr(float(self.gap[i])), repr(float(self.se[i]))])

    def to_json(self):
        return {
            "format": "kcmap-gap-profile",
            "version": 1,
            "B": self.B,
            "k": [int(k) for k in self.ks],
            "logW": [float(v) for v in self.log_wss],
            "ElogW": [float(v) for v in self.expected_log_wss],
            "gap": [float(v) for v in self.gap],
            "se": [float(v) for v in self.se],
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != "kcmap-gap-profile":
            raise DataError("not a serialized gap profile")
        return cls(np.array(obj["k"]), np.array(obj["logW"]),
                   np.array(obj["ElogW"]), np.array(obj["gap"]),
                   np.array(obj["se"]), obj["B"])


def _log_wss_curve(dist, kmax):
    merges, _ = ward_tree(dist)
    n = dist.shape[0]
    out = np.empty(kmax)
    with np.errstate(divide="ignore"):
        for k in range(1, kmax + 1):
            labels = cut_merges(merges, n, k)
            out[k - 1] = np.log(wss(dist, labels))
    return out


def gap_statistic(m1, metric="pearson_distance", kmax=70, B=100, seed=None):
    """Gap profile for k in [1, kmax] against B uniform reference draws.

    Reference datasets replace each feature (column of the imputed
    similarity rows) with uniform draws over that feature's observed range;
    each draw has its own RNG stream derived from (seed, draw index), so
    the profile is reproducible and schedule-independent.
    """
    if B < 2:
        raise ValueError("need at least 2 reference draws, got %d" % B)
    X = impute_features(m1)
    n = X.shape[0]
    if not 1 <= kmax <= n:
        raise ValueError("kmax must be in [1, %d], got %d" % (n, kmax))
    # observed range per feature, skipping the diagonal: an item's own
    # coordinate never enters a distance, so its imputed 1 must not widen
    # the reference distribution
    off = np.where(np.eye(n, dtype=bool), np.nan, X)
    lo = np.nanmin(off, axis=0)
    hi = np.nanmax(off, axis=0)
    if np.all(lo == hi):
        raise ValueError("all features are constant; no range to sample")
    real = _log_wss_curve(item_distance(m1, metric).values, kmax)
    ref = np.empty((B, kmax))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(b,)))
        R = rng.uniform(lo, hi, size=(n, n))
        ref[b] = _log_wss_curve(row_feature_distances(R, metric), kmax)
    expected = ref.mean(axis=0)
    se = ref.std(axis=0, ddof=0) * np.sqrt(1.0 + 1.0 / B)
    return GapProfile(np.arange(1, kmax + 1), real, expected,
                      expected - real, se, B)


def select_k(profile, rule):
    """Pick a cluster count from a gap profile.

    first_max: the smallest k whose gap is not exceeded by the next one
    (kmax when the profile is strictly increasing). first_se_max: the
    smallest k at or below first_max whose gap is within one standard
    error of the first_max gap.
    """
    g = profile.gap
    kmax = int(profile.ks[-1])
    k_star = kmax
    for i in range(len(g) - 1):
        if g[i] >= g[i + 1]:
            k_star = int(profile.ks[i])
            break
    if rule == "first_max":
        return k_star
    if rule == "first_se_max":
        threshold = g[k_star - 1] - profile.se[k_star - 1]
        for i in range(k_star):
            if g[i] >= threshold:
                return int(profile.ks[i])
        return k_star
    raise ValueError("unknown selection rule %r" % (rule,))
