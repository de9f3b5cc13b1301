import json

import numpy as np
import pytest

from kcmap.bktsim import SimConfig, generate_dataset
from kcmap.errors import ConfigError
from kcmap.pipeline import (
    PipelineConfig,
    build_config,
    parse_config_file,
    run_gap,
    run_pipeline,
)

SIM_KEYS = {"learners": "150", "kcs": "4", "items": "24", "seed": "11"}


def small_cfg(tmp_path, **extra):
    pairs = dict(SIM_KEYS, k="4", out=str(tmp_path / "out"))
    pairs.update({k: str(v) for k, v in extra.items()})
    return build_config({}, pairs)


class TestConfigFile:
    def test_parse_comments_and_blanks(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# full line comment\n\nseed = 3   # trailing\nk=2\n")
        assert parse_config_file(p) == {"seed": "3", "k": "2"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(tmp_path / "nope.cfg")

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed 3\n")
        with pytest.raises(ConfigError, match="c.cfg:1"):
            parse_config_file(p)

    def test_duplicate_key(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed = 3\nseed = 4\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_file(p)


class TestBuildConfig:
    def test_defaults(self):
        cfg = build_config({}, {"seed": "7"})
        assert cfg.mode == "sim"
        assert cfg.measures == ("kappa_learning",)
        assert cfg.metric == "pearson_distance"
        assert cfg.method == "ward"
        assert cfg.restarts == 100 and cfg.min_support == 20
        assert cfg.kmax == 70 and cfg.gap_b == 100
        assert cfg.learners == 1000 and cfg.kcs == 20 and cfg.items == 200

    def test_overrides_win_over_file(self):
        cfg = build_config({"seed": "1", "k": "5"}, {"seed": "2"})
        assert cfg.seed == 2 and cfg.k == 5

    def test_measure_list_parsing(self):
        cfg = build_config({}, {"seed": "1", "measures": "kappa, yule"})
        assert cfg.measures == ("kappa", "yule")

    def test_mode_inferred_from_responses(self):
        cfg = build_config({}, {"seed": "1", "responses": "r.csv"})
        assert cfg.mode == "files"

    @pytest.mark.parametrize("pairs,msg", [
        ({}, "seed"),
        ({"seed": "1", "version": "2"}, "version"),
        ({"seed": "1", "unknown_key": "x"}, "unknown config key"),
        ({"seed": "x"}, "bad value"),
        ({"seed": "1", "measures": ""}, "at least one measure"),
        ({"seed": "1", "measures": "kappa,kappa"}, "duplicate measure"),
        ({"seed": "1", "measures": "nope"}, "unknown measure"),
        ({"seed": "1", "metric": "manhattan"}, "unknown metric"),
        ({"seed": "1", "method": "dbscan"}, "unknown method"),
        ({"seed": "1", "gap_rule": "last_max"}, "unknown gap rule"),
        ({"seed": "1", "granularity": "third"}, "unknown granularity"),
        ({"seed": "1", "k": "0"}, "k must be positive"),
        ({"seed": "1", "gap_b": "1"}, "gap_b"),
        ({"seed": "1", "mode": "files"}, "responses"),
        ({"seed": "1", "responses": "r.csv", "repetitions": "3"},
         "repetitions"),
        ({"seed": "1", "granularity": "first"}, "files mode"),
        ({"seed": "1", "responses": "r.csv", "granularity": "first"},
         "labels path"),
        ({"seed": "1", "items": "3", "kcs": "5"}, "at least one item"),
    ])
    def test_rejections(self, pairs, msg):
        with pytest.raises(ConfigError, match=msg):
            build_config({}, pairs)

    def test_hash_excludes_output_dir(self):
        a = build_config({}, {"seed": "1", "out": "x"})
        b = build_config({}, {"seed": "1", "out": "y"})
        c = build_config({}, {"seed": "2", "out": "x"})
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()
        assert len(a.config_hash()) == 12


class TestRunPipeline:
    def test_needs_exactly_one_k_source(self, tmp_path):
        cfg = small_cfg(tmp_path, gap_rule="first_max")
        with pytest.raises(ConfigError, match="exactly one"):
            run_pipeline(cfg)
        bare = build_config({}, dict(SIM_KEYS, out=str(tmp_path)))
        with pytest.raises(ConfigError, match="exactly one"):
            run_pipeline(bare)

    def test_sim_run_report_shape(self, tmp_path):
        cfg = small_cfg(tmp_path, measures="kappa_learning,kappa",
                        repetitions="2")
        report = run_pipeline(cfg)
        assert report["config_hash"] == cfg.config_hash()
        assert len(report["results"]) == 4
        for e in report["results"]:
            assert e["reference"] == "truth"
            assert e["k"] == 4
            assert -0.5 <= e["ari"] <= 1.0
            assert e["wss"] >= 0.0
        assert set(report["summary"]) == {"kappa_learning", "kappa"}
        assert report["summary"]["kappa"]["reps"] == 2
        out = tmp_path / "out"
        for name in ("report.json", "results.csv", "summary.csv"):
            text = (out / name).read_text()
            assert cfg.config_hash() in text

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg_a = small_cfg(tmp_path / "a", repetitions="2")
        cfg_b = small_cfg(tmp_path / "b", repetitions="2")
        run_pipeline(cfg_a)
        run_pipeline(cfg_b)
        for name in ("report.json", "results.csv", "summary.csv"):
            a = (tmp_path / "a" / "out" / name).read_bytes()
            b = (tmp_path / "b" / "out" / name).read_bytes()
            assert a == b

    def test_kmeans_restart_table(self, tmp_path):
        cfg = small_cfg(tmp_path, method="kmeans", restarts="8")
        report = run_pipeline(cfg)
        entry = report["results"][0]
        assert 0 <= entry["best_restart"] < 8
        assert set(entry["restart_ari"]) == {
            "mean", "sd", "min", "q25", "median", "q75", "max"}
        table = (tmp_path / "out" / "restarts_kappa_learning.csv").read_text()
        lines = table.strip().splitlines()
        assert lines[1] == "restart,ari,wss"
        assert len(lines) == 2 + 8

    def test_gap_rule_resolves_k(self, tmp_path):
        cfg = build_config({}, {**SIM_KEYS, "gap_rule": "first_max",
                                "kmax": "6", "gap_b": "4",
                                "out": str(tmp_path / "out")})
        report = run_pipeline(cfg)
        assert 1 <= report["results"][0]["k"] <= 6

    def test_files_mode_with_truth(self, tmp_path):
        sim = generate_dataset(SimConfig(learners=80, kcs=3, items=18, seed=4))
        sim.save(tmp_path / "data")
        cfg = build_config({}, {
            "responses": str(tmp_path / "data" / "responses.csv"),
            "truth": str(tmp_path / "data" / "truth.csv"),
            "k": "3", "seed": "9", "filter_min_items": "0",
            "filter_min_success": "0", "out": str(tmp_path / "out"),
        })
        report = run_pipeline(cfg)
        assert report["results"][0]["reference"] == "truth"
        assert report["results"][0]["ari"] > 0.0

    def test_files_mode_without_reference(self, tmp_path):
        sim = generate_dataset(SimConfig(learners=60, kcs=3, items=12, seed=4))
        sim.save(tmp_path / "data")
        cfg = build_config({}, {
            "responses": str(tmp_path / "data" / "responses.csv"),
            "k": "3", "seed": "9", "filter_min_items": "0",
            "filter_min_success": "0", "min_support": "10",
            "out": str(tmp_path / "out"),
        })
        report = run_pipeline(cfg)
        assert report["results"][0]["ari"] is None
        assert report["results"][0]["wss"] >= 0.0
        assert report["summary"] == {}

    def test_granularity_reference(self, tmp_path):
        sim = generate_dataset(SimConfig(learners=80, kcs=3, items=18, seed=4))
        sim.save(tmp_path / "data")
        rows = ["item_id,subject,sub_subject,goal"]
        for item, kc in sorted(sim.labels.items()):
            n = int(kc[2:])
            rows.append("%s,%d,%d.1,G%d" % (item, n + 1, n + 1, n + 1))
        (tmp_path / "labels.csv").write_text("\n".join(rows) + "\n")
        cfg = build_config({}, {
            "responses": str(tmp_path / "data" / "responses.csv"),
            "labels": str(tmp_path / "labels.csv"),
            "granularity": "first", "seed": "9",
            "filter_min_items": "0", "filter_min_success": "0",
            "out": str(tmp_path / "out"),
        })
        report = run_pipeline(cfg)
        entry = report["results"][0]
        assert entry["k"] == 3
        assert entry["reference"] == "granularity"
        assert entry["ari"] > 0.0

    def test_empty_dataset_yields_empty_report(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("learner_id,item_id,position,correct\n")
        cfg = build_config({}, {
            "responses": str(p), "k": "2", "seed": "1",
            "out": str(tmp_path / "out"),
        })
        report = run_pipeline(cfg)
        assert report["results"] == [] and report["summary"] == {}
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert len(lines) == 2  # hash comment + header only


class TestRunGap:
    def test_report_and_files(self, tmp_path):
        cfg = build_config({}, {**SIM_KEYS, "kmax": "6", "gap_b": "4",
                                "out": str(tmp_path / "out")})
        report = run_gap(cfg)
        sel = report["selection"]["kappa_learning"]
        assert set(sel) == {"first_max", "first_se_max"}
        assert 1 <= sel["first_se_max"] <= sel["first_max"] <= 6
        prof = report["profiles"]["kappa_learning"]
        assert len(prof["gap"]) == 6
        csv_text = (tmp_path / "out" / "gap_kappa_learning.csv").read_text()
        assert csv_text.startswith("# config_hash: %s" % cfg.config_hash())
        assert "k,logW,ElogW,gap,se" in csv_text

    def test_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            cfg = build_config({}, {**SIM_KEYS, "kmax": "5", "gap_b": "3",
                                    "out": str(tmp_path / sub)})
            run_gap(cfg)
        assert ((tmp_path / "a" / "gap_report.json").read_bytes()
                == (tmp_path / "b" / "gap_report.json").read_bytes())

    def test_kmax_floor(self, tmp_path):
        cfg = build_config({}, {**SIM_KEYS, "kmax": "1",
                                "out": str(tmp_path)})
        with pytest.raises(ConfigError, match="kmax"):
            run_gap(cfg)


class TestReportJson:
    def test_report_is_loadable_and_sorted(self, tmp_path):
        cfg = small_cfg(tmp_path)
        run_pipeline(cfg)
        text = (tmp_path / "out" / "report.json").read_text()
        obj = json.loads(text)
        assert obj["format"] == "kcmap-report"
        assert obj["config"]["seed"] == 11
        assert "out" not in obj["config"]
        # canonical dump: keys sorted at every level
        assert text == json.dumps(obj, sort_keys=True, indent=2) + "\n"
