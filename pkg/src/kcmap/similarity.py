"""Pairwise contingency tables and item-similarity measures.

Each unordered item pair gets a 2x2 table counted over the learners who
answered both items. The cells are oriented by presentation order: for each
such learner let E be the item that learner saw earlier and T the one seen
later, then

    a: E right, T right    b: E wrong, T right
    c: E right, T wrong    d: E wrong, T wrong

so b is the "learned in between" cell. kappa_learning treats b as agreement
alongside a and d; the reference measures (kappa, pearson_phi, yule) are the
classical symmetric ones. Measures with a zero denominator are undefined and
reported as NaN (empty CSV cell, JSON null), never clamped or imputed here.
kappa_learning can fall below -1 on degenerate tables; values are reported
as computed.
"""

import csv
import json
import math
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DataError

MEASURES = ("kappa_learning", "kappa", "pearson_phi", "yule")
REFERENCE_MEASURES = ("kappa", "pearson_phi", "yule")

DEFAULT_MIN_SUPPORT = 20


class ContingencyTable(NamedTuple):
    a: int
    b: int
    c: int
    d: int

    @property
    def n(self):
        return self.a + self.b + self.c + self.d


def contingency(ds, i, j):
    """Oriented pair table for items i, j (ids) of a ResponseDataset."""
    if i == j:
        raise ValueError("need two distinct items, got %r twice" % (i,))
    try:
        ii = ds.items.index(i)
        jj = ds.items.index(j)
    except ValueError:
        missing = i if i not in ds.items else j
        raise ValueError("unknown item %r" % (missing,)) from None
    correct, position = ds.matrix()
    ci, cj = correct[:, ii], correct[:, jj]
    both = (ci >= 0) & (cj >= 0)
    ci, cj = ci[both], cj[both]
    i_first = position[both, ii] < position[both, jj]
    # earlier/later responses per learner under the orientation contract
    e = np.where(i_first, ci, cj)
    t = np.where(i_first, cj, ci)
    a = int(np.count_nonzero((e == 1) & (t == 1)))
    b = int(np.count_nonzero((e == 0) & (t == 1)))
    c = int(np.count_nonzero((e == 1) & (t == 0)))
    d = int(np.count_nonzero((e == 0) & (t == 0)))
    return ContingencyTable(a, b, c, d)


def kappa_learning(t):
    """(ad - bc) / ((a+c)(c+d)); NaN when the denominator is 0."""
    den = (t.a + t.c) * (t.c + t.d)
    if den == 0:
        return math.nan
    return (t.a * t.d - t.b * t.c) / den


def reference_measure(t, kind):
    a, b, c, d = t
    det = a * d - b * c
    if kind == "kappa":
        den = (a + b) * (b + d) + (a + c) * (c + d)
        return 2 * det / den if den else math.nan
    if kind == "pearson_phi":
        den = math.sqrt(float(a + c) * float(a + b) * float(b + d) * float(c + d))
        return det / den if den else math.nan
    if kind == "yule":
        den = a * d + b * c
        return det / den if den else math.nan
    raise ValueError("unknown measure kind %r" % (kind,))


def measure_value(t, measure):
    if measure == "kappa_learning":
        return kappa_learning(t)
    return reference_measure(t, measure)


def _measure_grid(A, B, C, D, measure):
    # same expression trees as the scalar paths, applied to count matrices
    A = A.astype(np.float64)
    B = B.astype(np.float64)
    C = C.astype(np.float64)
    D = D.astype(np.float64)
    det = A * D - B * C
    if measure == "kappa_learning":
        den = (A + C) * (C + D)
    elif measure == "kappa":
        det = 2 * det
        den = (A + B) * (B + D) + (A + C) * (C + D)
    elif measure == "pearson_phi":
        den = np.sqrt((A + C) * (A + B) * (B + D) * (C + D))
    elif measure == "yule":
        den = A * D + B * C
    else:
        raise ValueError("unknown measure %r" % (measure,))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den != 0, det / den, np.nan)


class SimilarityMatrix:
    """Symmetric item x item measure values with pair support counts.

    values[i,j] is NaN where the pair is undefined (support below the floor
    or zero denominator). The diagonal is 1 by convention and the diagonal
    of `support` holds each item's answer count.
    """

    def __init__(self, items, values, support, measure, min_support):
        self.items = list(items)
        self.values = np.asarray(values, dtype=np.float64)
        self.support = np.asarray(support, dtype=np.int64)
        self.measure = measure
        self.min_support = int(min_support)

    @property
    def n_items(self):
        return len(self.items)

    def defined_mask(self):
        return ~np.isnan(self.values)

    def save_csv(self, path, header_comment=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write("# %s\n" % header_comment)
            w = csv.writer(fh)
            w.writerow(["item_id"] + self.items)
            for i, it in enumerate(self.items):
                row = [it]
                for v in self.values[i]:
                    row.append("" if np.isnan(v) else repr(float(v)))
                w.writerow(row)

    def to_json(self):
        vals = [[None if np.isnan(v) else float(v) for v in row]
                for row in self.values]
        return {
            "format": "kcmap-similarity",
            "version": 1,
            "measure": self.measure,
            "min_support": self.min_support,
            "items": self.items,
            "values": vals,
            "support": self.support.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != "kcmap-similarity":
            raise DataError("not a serialized similarity matrix")
        vals = np.array([[np.nan if v is None else v for v in row]
                         for row in obj["values"]], dtype=np.float64)
        if vals.size == 0:
            vals = vals.reshape(0, 0)
        return cls(obj["items"], vals, np.array(obj["support"], dtype=np.int64
                                                ).reshape(vals.shape),
                   obj["measure"], obj["min_support"])

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")


def load_similarity_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return SimilarityMatrix.from_json(json.load(fh))


def pair_tables(ds):
    """All pair cell counts at once: symmetric int64 (A, B, C, D)."""
    correct, position = ds.matrix()
    return _kernels.pair_cell_counts(
        np.ascontiguousarray(correct), np.ascontiguousarray(position))


def build_similarity_matrix(ds, measure, min_support=DEFAULT_MIN_SUPPORT):
    """User-based similarity matrix over all item pairs of the dataset.

    Entries with pair support below min_support or an undefined measure are
    NaN. Symmetric by construction; diagonal fixed at 1.
    """
    if measure not in MEASURES:
        raise ValueError("unknown measure %r" % (measure,))
    if ds.n_items == 0:
        raise ValueError("dataset has no items")
    A, B, C, D = pair_tables(ds)
    support = A + B + C + D
    values = _measure_grid(A, B, C, D, measure)
    values[support < min_support] = np.nan
    np.fill_diagonal(values, 1.0)
    correct, _ = ds.matrix()
    answered = (correct >= 0).sum(axis=0).astype(np.int64)
    np.fill_diagonal(support, answered)
    return SimilarityMatrix(ds.items, values, support, measure, min_support)
