"""Response-log ingestion, learner filtering and ground-truth label handling.

The on-disk formats are CSV with a fixed header. Responses:

    learner_id,item_id,position,correct

one row per (learner, item) first attempt, `correct` in {0,1}, `position`
the presentation index within that learner's session. Absence of a row is
the missing value. Labels:

    item_id,subject,sub_subject,goal

where a cell may hold several tags separated by `|` and sub_subject/goal
may be empty. Both formats are UTF-8 and allow full-line `#` comments.
"""

import csv
import io
import json
import logging

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

FIXED = "fixed"
PER_LEARNER = "per_learner"
ORDER_MODES = (FIXED, PER_LEARNER)

GRANULARITIES = ("first", "first_goals", "second", "second_goals")

_RESPONSE_HEADER = ["learner_id", "item_id", "position", "correct"]
_LABEL_HEADER = ["item_id", "subject", "sub_subject", "goal"]


class ResponseDataset:
    """Sparse learner x item binary outcomes with per-learner presentation order.

    Immutable once constructed; safe to share across threads. `learners` and
    `items` fix the row/column order of the matrix view.
    """

    def __init__(self, learners, items, lidx, iidx, pos, corr, order_mode):
        self.learners = list(learners)
        self.items = list(items)
        self._lidx = np.asarray(lidx, dtype=np.int32)
        self._iidx = np.asarray(iidx, dtype=np.int32)
        self._pos = np.asarray(pos, dtype=np.int32)
        self._corr = np.asarray(corr, dtype=np.int8)
        self.order_mode = order_mode
        self._matrix = None

    @classmethod
    def from_records(cls, records, order_mode=FIXED):
        """Build from (learner_id, item_id, position, correct) tuples.

        Validates the dataset invariants; a fixed-order conflict (one item
        seen at different positions by different learners) downgrades the
        dataset to per_learner mode with a warning rather than failing.
        """
        if order_mode not in ORDER_MODES:
            raise ValueError("order_mode must be one of %s" % (ORDER_MODES,))
        learners, items = [], []
        lmap, imap = {}, {}
        lidx, iidx, pos, corr = [], [], [], []
        seen_pairs = set()
        seen_positions = set()
        for rec in records:
            learner, item, p, c = rec
            p = int(p)
            c = int(c)
            if p < 0:
                raise DataError("negative position %d for learner %r" % (p, learner))
            if c not in (0, 1):
                raise DataError("correct must be 0 or 1, got %r" % (c,))
            if (learner, item) in seen_pairs:
                raise DataError(
                    "duplicate response for learner %r, item %r" % (learner, item))
            seen_pairs.add((learner, item))
            if (learner, p) in seen_positions:
                raise DataError(
                    "duplicate position %d for learner %r" % (p, learner))
            seen_positions.add((learner, p))
            if learner not in lmap:
                lmap[learner] = len(learners)
                learners.append(learner)
            if item not in imap:
                imap[item] = len(items)
                items.append(item)
            lidx.append(lmap[learner])
            iidx.append(imap[item])
            pos.append(p)
            corr.append(c)
        if order_mode == FIXED:
            global_pos = {}
            for ii, p in zip(iidx, pos):
                if global_pos.setdefault(ii, p) != p:
                    log.warning(
                        "item %r appears at multiple positions; "
                        "treating order as per_learner", items[ii])
                    order_mode = PER_LEARNER
                    break
        return cls(learners, items, lidx, iidx, pos, corr, order_mode)

    @property
    def n_learners(self):
        return len(self.learners)

    @property
    def n_items(self):
        return len(self.items)

    @property
    def n_records(self):
        return int(self._lidx.shape[0])

    def matrix(self):
        """(correct, position) as dense int8/int32 arrays, -1 where missing."""
        if self._matrix is None:
            L, N = len(self.learners), len(self.items)
            correct = np.full((L, N), -1, dtype=np.int8)
            position = np.full((L, N), -1, dtype=np.int32)
            correct[self._lidx, self._iidx] = self._corr
            position[self._lidx, self._iidx] = self._pos
            self._matrix = (correct, position)
        return self._matrix

    def records(self):
        """Canonical record list, sorted by (learner index, position)."""
        order = np.lexsort((self._pos, self._lidx))
        out = []
        for t in order:
            out.append((self.learners[self._lidx[t]], self.items[self._iidx[t]],
                        int(self._pos[t]), int(self._corr[t])))
        return out

    def __eq__(self, other):
        if not isinstance(other, ResponseDataset):
            return NotImplemented
        return (self.order_mode == other.order_mode
                and self.learners == other.learners
                and self.items == other.items
                and self.records() == other.records())

    def __repr__(self):
        return "ResponseDataset(%d learners, %d items, %d records, %s order)" % (
            self.n_learners, self.n_items, self.n_records, self.order_mode)

    def to_json(self):
        order = np.lexsort((self._pos, self._lidx))
        return {
            "format": "kcmap-responses",
            "version": 1,
            "order_mode": self.order_mode,
            "learners": self.learners,
            "items": self.items,
            "records": [[int(self._lidx[t]), int(self._iidx[t]),
                         int(self._pos[t]), int(self._corr[t])] for t in order],
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != "kcmap-responses":
            raise DataError("not a serialized response dataset")
        recs = obj["records"]
        return cls(obj["learners"], obj["items"],
                   [r[0] for r in recs], [r[1] for r in recs],
                   [r[2] for r in recs], [r[3] for r in recs],
                   obj["order_mode"])

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    def save_csv(self, path, header_comment=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write("# %s\n" % header_comment)
            w = csv.writer(fh)
            w.writerow(_RESPONSE_HEADER)
            w.writerows(self.records())


def _open_csv(path):
    # full-line comments allowed anywhere; csv sees only data lines
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return csv.reader(io.StringIO("\n".join(lines)))


def load_responses(path, order_mode=FIXED):
    """Parse a response CSV into a ResponseDataset.

    An empty file (or header only) yields an empty dataset. Malformed rows
    raise DataError with the offending line number.
    """
    reader = _open_csv(path)
    rows = list(reader)
    if not rows:
        return ResponseDataset.from_records([], order_mode)
    if rows[0] != _RESPONSE_HEADER:
        raise DataError("%s: expected header %s, got %s"
                        % (path, ",".join(_RESPONSE_HEADER), ",".join(rows[0])))
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError("%s:%d: expected 4 fields, got %d"
                            % (path, lineno, len(row)))
        learner, item, p, c = row
        try:
            p = int(p)
            c = int(c)
        except ValueError:
            raise DataError("%s:%d: position and correct must be integers"
                            % (path, lineno)) from None
        if c not in (0, 1):
            raise DataError("%s:%d: correct must be 0 or 1" % (path, lineno))
        if p < 0:
            raise DataError("%s:%d: position must be non-negative" % (path, lineno))
        records.append((learner, item, p, c))
    return ResponseDataset.from_records(records, order_mode)


def load_responses_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return ResponseDataset.from_json(json.load(fh))


def filter_learners(ds, min_items=50, min_success=0.25):
    """Keep learners with >= min_items attempts and >= min_success accuracy.

    Retained learners keep all their records untouched; the item set is left
    as is. Idempotent.
    """
    if min_items < 0 or min_success < 0:
        raise ValueError("thresholds must be non-negative")
    counts = np.zeros(len(ds.learners), dtype=np.int64)
    hits = np.zeros(len(ds.learners), dtype=np.int64)
    np.add.at(counts, ds._lidx, 1)
    np.add.at(hits, ds._lidx, ds._corr.astype(np.int64))
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(counts > 0, hits / np.maximum(counts, 1), 0.0)
    keep = (counts >= min_items) & (rate >= min_success)
    keep_mask = keep[ds._lidx]
    old_to_new = np.full(len(ds.learners), -1, dtype=np.int32)
    kept_learners = [l for li, l in enumerate(ds.learners) if keep[li]]
    old_to_new[keep] = np.arange(len(kept_learners), dtype=np.int32)
    return ResponseDataset(
        kept_learners, ds.items,
        old_to_new[ds._lidx[keep_mask]], ds._iidx[keep_mask],
        ds._pos[keep_mask], ds._corr[keep_mask], ds.order_mode)


def _compose(tags):
    tags = sorted(tags)
    if len(tags) == 1:
        return tags[0]
    return "{%s}" % ",".join(tags)


class LabelSet:
    """Ground-truth item labels at the four granularities.

    Holds one label map per granularity. Items lacking a tag required by a
    granularity (no sub_subject, no goal) are absent from that granularity's
    map and thus excluded from evaluation at it.
    """

    def __init__(self, maps):
        self.maps = {g: dict(maps.get(g, {})) for g in GRANULARITIES}

    def map(self, granularity):
        if granularity not in GRANULARITIES:
            raise ValueError("unknown granularity %r" % (granularity,))
        return dict(self.maps[granularity])

    def items_at(self, granularity):
        return sorted(self.map(granularity))

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self.maps == other.maps


def load_labels(path):
    """Parse a label CSV into a LabelSet with composed labels.

    Multi-tag cells become one composite class ("1|2" -> "{1,2}"); the goal
    granularities pair the level label with the goal label via "x".
    """
    reader = _open_csv(path)
    rows = list(reader)
    if not rows:
        return LabelSet({})
    if rows[0] != _LABEL_HEADER:
        raise DataError("%s: expected header %s, got %s"
                        % (path, ",".join(_LABEL_HEADER), ",".join(rows[0])))
    maps = {g: {} for g in GRANULARITIES}
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError("%s:%d: expected 4 fields, got %d"
                            % (path, lineno, len(row)))
        item, subject, sub, goal = [f.strip() for f in row]
        if item in seen:
            raise DataError("%s:%d: duplicate labels for item %r"
                            % (path, lineno, item))
        seen.add(item)
        subjects = [t for t in subject.split("|") if t]
        subs = [t for t in sub.split("|") if t]
        goals = [t for t in goal.split("|") if t]
        if not subjects:
            raise DataError("%s:%d: item %r has no subject label"
                            % (path, lineno, item))
        maps["first"][item] = _compose(subjects)
        if subs:
            maps["second"][item] = _compose(subs)
        if goals:
            maps["first_goals"][item] = _compose(subjects) + "×" + _compose(goals)
            if subs:
                maps["second_goals"][item] = _compose(subs) + "×" + _compose(goals)
    return LabelSet(maps)


def prune_singletons(ls):
    """Drop label classes of size 1 (with their items) at every granularity."""
    maps = {}
    for g in GRANULARITIES:
        m = ls.maps[g]
        sizes = {}
        for lab in m.values():
            sizes[lab] = sizes.get(lab, 0) + 1
        maps[g] = {it: lab for it, lab in m.items() if sizes[lab] >= 2}
    return LabelSet(maps)
