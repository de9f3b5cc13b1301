import numpy as np
import pytest

from kcmap import dataset
from kcmap.dataset import (
    LabelSet,
    ResponseDataset,
    filter_learners,
    load_labels,
    load_responses,
    prune_singletons,
)
from kcmap.errors import DataError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


RESPONSES = "learner_id,item_id,position,correct\n"


class TestLoadResponses:
    def test_small_file(self, tmp_path):
        p = write(tmp_path / "r.csv", RESPONSES + "L1,q1,0,1\nL1,q2,1,0\nL2,q1,0,1\n")
        ds = load_responses(p)
        assert ds.n_learners == 2
        assert ds.n_items == 2
        assert ds.n_records == 3
        assert ds.learners == ["L1", "L2"]
        assert ds.items == ["q1", "q2"]

    def test_empty_file(self, tmp_path):
        p = write(tmp_path / "r.csv", "")
        ds = load_responses(p)
        assert ds.n_learners == 0 and ds.n_items == 0 and ds.n_records == 0

    def test_header_only(self, tmp_path):
        ds = load_responses(write(tmp_path / "r.csv", RESPONSES))
        assert ds.n_records == 0

    def test_duplicate_pair_rejected(self, tmp_path):
        p = write(tmp_path / "r.csv",
                  RESPONSES + "L1,q1,0,1\nL1,q1,1,0\n")
        with pytest.raises(DataError, match="L1.*q1"):
            load_responses(p)

    def test_duplicate_position_rejected(self, tmp_path):
        p = write(tmp_path / "r.csv",
                  RESPONSES + "L1,q1,0,1\nL1,q2,0,0\n")
        with pytest.raises(DataError, match="position 0.*L1"):
            load_responses(p)

    def test_malformed_row_reports_line(self, tmp_path):
        p = write(tmp_path / "r.csv", RESPONSES + "L1,q1,0,1\nL1,q2,one,0\n")
        with pytest.raises(DataError, match=":3:"):
            load_responses(p)

    def test_correct_must_be_binary(self, tmp_path):
        p = write(tmp_path / "r.csv", RESPONSES + "L1,q1,0,2\n")
        with pytest.raises(DataError, match="0 or 1"):
            load_responses(p)

    def test_bad_header(self, tmp_path):
        p = write(tmp_path / "r.csv", "user,item,pos,ok\nL1,q1,0,1\n")
        with pytest.raises(DataError, match="header"):
            load_responses(p)

    def test_comment_lines_skipped(self, tmp_path):
        p = write(tmp_path / "r.csv",
                  "# config_hash: abc\n" + RESPONSES + "L1,q1,0,1\n")
        assert load_responses(p).n_records == 1

    def test_fixed_conflict_downgrades_with_warning(self, tmp_path, caplog):
        p = write(tmp_path / "r.csv",
                  RESPONSES + "L1,q1,0,1\nL2,q1,3,1\n")
        with caplog.at_level("WARNING", logger="kcmap.dataset"):
            ds = load_responses(p, order_mode="fixed")
        assert ds.order_mode == "per_learner"
        assert any("q1" in r.message for r in caplog.records)

    def test_fixed_mode_kept_when_consistent(self, tmp_path):
        p = write(tmp_path / "r.csv",
                  RESPONSES + "L1,q1,0,1\nL2,q1,0,0\nL2,q2,1,1\n")
        assert load_responses(p, order_mode="fixed").order_mode == "fixed"


class TestMatrixView:
    def test_missing_encoded_as_minus_one(self, tmp_path):
        p = write(tmp_path / "r.csv", RESPONSES + "L1,q1,0,1\nL1,q2,1,0\nL2,q2,0,1\n")
        ds = load_responses(p)
        correct, position = ds.matrix()
        assert correct.tolist() == [[1, 0], [-1, 1]]
        assert position.tolist() == [[0, 1], [-1, 0]]

    def test_csv_round_trip(self, tmp_path):
        p = write(tmp_path / "r.csv",
                  RESPONSES + "L1,q1,0,1\nL1,q2,1,0\nL2,q2,5,1\nL3,q3,2,0\n")
        ds = load_responses(p)
        out = tmp_path / "out.csv"
        ds.save_csv(out)
        assert load_responses(out) == ds

    def test_json_round_trip(self, tmp_path):
        p = write(tmp_path / "r.csv", RESPONSES + "L1,q1,0,1\nL2,q2,0,0\n")
        ds = load_responses(p)
        out = tmp_path / "ds.json"
        ds.save_json(out)
        assert dataset.load_responses_json(out) == ds


class TestFilterLearners:
    def make(self, n_attempts, n_correct, learner="L"):
        recs = [(learner, "q%d" % t, t, 1 if t < n_correct else 0)
                for t in range(n_attempts)]
        return ResponseDataset.from_records(recs)

    def test_too_few_attempts_removed(self):
        ds = self.make(49, 49)
        assert filter_learners(ds).n_learners == 0

    def test_boundary_attempts_and_rate_retained(self):
        ds = self.make(50, 15)  # exactly 50 attempts, 30% success
        out = filter_learners(ds)
        assert out.learners == ["L"]

    def test_low_success_removed(self):
        ds = self.make(200, 40)  # 20% success
        assert filter_learners(ds).n_learners == 0

    def test_idempotent(self):
        recs = []
        rng = np.random.default_rng(0)
        for l in range(8):
            n = int(rng.integers(30, 120))
            for t in range(n):
                recs.append(("L%d" % l, "q%d" % t, t, int(rng.random() < 0.4)))
        ds = ResponseDataset.from_records(recs)
        once = filter_learners(ds)
        twice = filter_learners(once)
        assert once == twice

    def test_retained_records_unchanged(self):
        recs = [("A", "q%d" % t, t, t % 2) for t in range(60)]
        recs += [("B", "q1", 0, 0)]
        ds = ResponseDataset.from_records(recs)
        out = filter_learners(ds)
        assert out.learners == ["A"]
        assert [r for r in ds.records() if r[0] == "A"] == out.records()
        assert out.items == ds.items  # item set untouched


LABELS = "item_id,subject,sub_subject,goal\n"


class TestLabels:
    def test_composed_granularities(self, tmp_path):
        p = write(tmp_path / "l.csv", LABELS + "q1,3,3.1,G2\n")
        ls = load_labels(p)
        assert ls.map("first") == {"q1": "3"}
        assert ls.map("second") == {"q1": "3.1"}
        assert ls.map("first_goals") == {"q1": "3×G2"}
        assert ls.map("second_goals") == {"q1": "3.1×G2"}

    def test_multi_tag_composite(self, tmp_path):
        p = write(tmp_path / "l.csv", LABELS + "q1,2|1,,\n")
        ls = load_labels(p)
        assert ls.map("first") == {"q1": "{1,2}"}

    def test_missing_optional_levels_excluded(self, tmp_path):
        p = write(tmp_path / "l.csv", LABELS + "q1,1,,G1\nq2,1,1.1,\n")
        ls = load_labels(p)
        assert set(ls.map("first")) == {"q1", "q2"}
        assert set(ls.map("second")) == {"q2"}
        assert set(ls.map("first_goals")) == {"q1"}
        assert ls.map("second_goals") == {}

    def test_subject_required(self, tmp_path):
        p = write(tmp_path / "l.csv", LABELS + "q1,,1.1,G1\n")
        with pytest.raises(DataError, match="subject"):
            load_labels(p)

    def test_duplicate_item_rejected(self, tmp_path):
        p = write(tmp_path / "l.csv", LABELS + "q1,1,,\nq1,2,,\n")
        with pytest.raises(DataError, match="q1"):
            load_labels(p)

    def test_unknown_granularity(self):
        with pytest.raises(ValueError, match="granularity"):
            LabelSet({}).map("third")


class TestPruneSingletons:
    def test_singleton_class_removed(self):
        ls = LabelSet({"first": {"q1": "A", "q2": "B", "q3": "B"}})
        out = prune_singletons(ls)
        assert out.map("first") == {"q2": "B", "q3": "B"}

    def test_pair_class_retained(self):
        ls = LabelSet({"first": {"q1": "A", "q2": "A"}})
        assert prune_singletons(ls).map("first") == {"q1": "A", "q2": "A"}

    def test_identity_when_no_singletons(self):
        ls = LabelSet({"first": {"q1": "A", "q2": "A", "q3": "B", "q4": "B"}})
        assert prune_singletons(ls) == ls

    def test_all_class_sizes_at_least_two_afterwards(self, tmp_path):
        rows = [LABELS]
        rng = np.random.default_rng(3)
        for i in range(40):
            rows.append("q%d,%d,%d.%d,G%d\n"
                        % (i, rng.integers(1, 5), rng.integers(1, 5),
                           rng.integers(1, 4), rng.integers(1, 6)))
        ls = prune_singletons(load_labels(write(tmp_path / "l.csv", "".join(rows))))
        for g in dataset.GRANULARITIES:
            m = ls.map(g)
            for lab in set(m.values()):
                assert sum(1 for v in m.values() if v == lab) >= 2
