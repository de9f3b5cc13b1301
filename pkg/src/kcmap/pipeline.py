"""End-to-end runs: data in, similarity, clustering, scores, report out.

Configuration comes from a versioned key=value file merged with override
pairs (overrides win). Every run is identified by a short hash of the
canonical config; all emitted files carry that hash, JSON as a field and
CSV in a leading comment line, so any number in a report can be traced
back to the exact configuration and seed that produced it. Reruns with
the same config produce byte-identical files.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .bktsim import SimConfig, generate_dataset, load_truth_csv
from .cluster import METRICS, item_distance, kmeans_cluster, ward_cluster
from .dataset import (
    GRANULARITIES,
    filter_learners,
    load_labels,
    load_responses,
    prune_singletons,
)
from .errors import ConfigError
from .evaluation import ari, gap_statistic, select_k, wss
from .similarity import MEASURES, build_similarity_matrix

CONFIG_VERSION = 1
MODES = ("sim", "files")
METHODS = ("ward", "kmeans")
GAP_RULES = ("first_max", "first_se_max")


def _parse_int(v):
    return int(v, 10)


def _parse_float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _parse_str(v):
    return v


def _parse_measures(v):
    parts = tuple(p.strip() for p in v.split(",") if p.strip())
    return parts


# key -> (parser, default); None defaults mean "unset"
_SCHEMA = {
    "version": (_parse_int, CONFIG_VERSION),
    "mode": (_parse_str, None),
    "responses": (_parse_str, None),
    "labels": (_parse_str, None),
    "truth": (_parse_str, None),
    "measures": (_parse_measures, ("kappa_learning",)),
    "metric": (_parse_str, "pearson_distance"),
    "method": (_parse_str, "ward"),
    "k": (_parse_int, None),
    "granularity": (_parse_str, None),
    "gap_rule": (_parse_str, None),
    "restarts": (_parse_int, 100),
    "min_support": (_parse_int, 20),
    "kmax": (_parse_int, 70),
    "gap_b": (_parse_int, 100),
    "repetitions": (_parse_int, 1),
    "seed": (_parse_int, None),
    "filter_min_items": (_parse_int, 50),
    "filter_min_success": (_parse_float, 0.25),
    "learners": (_parse_int, 1000),
    "kcs": (_parse_int, 20),
    "items": (_parse_int, 200),
    "p_l0": (_parse_float, 0.0),
    "p_slip": (_parse_float, 0.1),
    "p_guess": (_parse_float, 0.2),
    "contiguous_items": (_parse_int, 6),
    "out": (_parse_str, "."),
}

_SIM_KEYS = ("learners", "kcs", "items", "p_l0", "p_slip", "p_guess",
             "contiguous_items")


@dataclass(frozen=True)
class PipelineConfig:
    version: int = CONFIG_VERSION
    mode: str = "sim"
    responses: str = None
    labels: str = None
    truth: str = None
    measures: tuple = ("kappa_learning",)
    metric: str = "pearson_distance"
    method: str = "ward"
    k: int = None
    granularity: str = None
    gap_rule: str = None
    restarts: int = 100
    min_support: int = 20
    kmax: int = 70
    gap_b: int = 100
    repetitions: int = 1
    seed: int = None
    filter_min_items: int = 50
    filter_min_success: float = 0.25
    learners: int = 1000
    kcs: int = 20
    items: int = 200
    p_l0: float = 0.0
    p_slip: float = 0.1
    p_guess: float = 0.2
    contiguous_items: int = 6
    out: str = "."

    def sim_config(self, seed):
        try:
            return SimConfig(learners=self.learners, kcs=self.kcs,
                             items=self.items, p_l0=self.p_l0,
                             p_slip=self.p_slip, p_guess=self.p_guess,
                             contiguous_items=self.contiguous_items, seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc))

    def canonical(self):
        """Everything that affects the computation; output location excluded."""
        d = asdict(self)
        d.pop("out")
        d["measures"] = list(self.measures)
        return d

    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def parse_config_file(path):
    """key = value lines; '#' starts a comment; blank lines ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % (path,))
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError("%s:%d: expected key = value" % (path, lineno))
        if key in pairs:
            raise ConfigError("%s:%d: duplicate key %r" % (path, lineno, key))
        pairs[key] = value
    return pairs


def build_config(file_pairs=None, overrides=None):
    """Merge file pairs with override pairs (overrides win) and validate."""
    merged = dict(file_pairs or {})
    merged.update(overrides or {})
    values = {}
    for key, raw in merged.items():
        if key not in _SCHEMA:
            raise ConfigError("unknown config key %r" % (key,))
        parser, _ = _SCHEMA[key]
        if raw is None:
            continue
        try:
            values[key] = parser(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError):
            raise ConfigError("bad value for %s: %r" % (key, raw))
    for key, (_, default) in _SCHEMA.items():
        values.setdefault(key, default)
    if values["mode"] is None:
        values["mode"] = "files" if values["responses"] else "sim"
    cfg = PipelineConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg):
    def fail(msg):
        raise ConfigError(msg)

    if cfg.version != CONFIG_VERSION:
        fail("unsupported config version %r" % (cfg.version,))
    if cfg.mode not in MODES:
        fail("mode must be one of %s" % (MODES,))
    if cfg.seed is None:
        fail("seed is required")
    if not cfg.measures:
        fail("at least one measure is required")
    for m in cfg.measures:
        if m not in MEASURES:
            fail("unknown measure %r" % (m,))
    if len(set(cfg.measures)) != len(cfg.measures):
        fail("duplicate measure in list")
    if cfg.metric not in METRICS:
        fail("unknown metric %r" % (cfg.metric,))
    if cfg.method not in METHODS:
        fail("unknown method %r" % (cfg.method,))
    if cfg.gap_rule is not None and cfg.gap_rule not in GAP_RULES:
        fail("unknown gap rule %r" % (cfg.gap_rule,))
    if cfg.granularity is not None and cfg.granularity not in GRANULARITIES:
        fail("unknown granularity %r" % (cfg.granularity,))
    if cfg.k is not None and cfg.k < 1:
        fail("k must be positive")
    for name, lo in (("restarts", 1), ("min_support", 0), ("kmax", 1),
                     ("gap_b", 2), ("repetitions", 1),
                     ("filter_min_items", 0)):
        if getattr(cfg, name) < lo:
            fail("%s must be >= %d" % (name, lo))
    if cfg.filter_min_success < 0:
        fail("filter_min_success must be non-negative")
    if cfg.mode == "files":
        if not cfg.responses:
            fail("files mode needs a responses path")
        if cfg.repetitions != 1:
            fail("repetitions only apply to sim mode")
    else:
        if cfg.granularity is not None:
            fail("granularity labels require files mode")
        cfg.sim_config(cfg.seed)
    if cfg.granularity is not None and not cfg.labels:
        fail("granularity %r needs a labels path" % (cfg.granularity,))


def _validate_for_clustering(cfg):
    sources = [s for s in (cfg.k, cfg.granularity, cfg.gap_rule)
               if s is not None]
    if len(sources) != 1:
        raise ConfigError(
            "exactly one of k, granularity or gap_rule must be set")
    if cfg.gap_rule is not None and cfg.repetitions != 1:
        raise ConfigError("gap_rule does not combine with repetitions")


def _granularity_reference(cfg, item_ids):
    ls = prune_singletons(load_labels(cfg.labels))
    gmap = ls.map(cfg.granularity)
    present = set(item_ids)
    ref = {it: lab for it, lab in gmap.items() if it in present}
    if len(set(ref.values())) < 1:
        raise ConfigError(
            "no %s labels cover the dataset items" % (cfg.granularity,))
    return ref


def _iter_reps(cfg):
    """Yield (rep, seed, dataset, reference labelings) lazily."""
    if cfg.mode == "sim":
        for r in range(cfg.repetitions):
            sim = generate_dataset(cfg.sim_config(cfg.seed + r))
            yield r, cfg.seed + r, sim.responses, {"truth": sim.labels}
    else:
        ds = load_responses(cfg.responses)
        ds = filter_learners(ds, cfg.filter_min_items, cfg.filter_min_success)
        refs = {}
        if cfg.truth:
            refs["truth"] = load_truth_csv(cfg.truth)
        if cfg.granularity is not None:
            refs["granularity"] = _granularity_reference(cfg, ds.items)
        yield 0, cfg.seed, ds, refs


def _primary_ref(refs):
    if "truth" in refs:
        return "truth", refs["truth"]
    if "granularity" in refs:
        return "granularity", refs["granularity"]
    return None, None


def _resolve_k(cfg, m1, refs, rep_seed):
    if cfg.k is not None:
        return cfg.k
    if cfg.granularity is not None:
        return len(set(refs["granularity"].values()))
    profile = gap_statistic(m1, metric=cfg.metric, kmax=cfg.kmax,
                            B=cfg.gap_b, seed=rep_seed)
    return select_k(profile, cfg.gap_rule)


def _quantiles(values):
    q = np.quantile(np.asarray(values, dtype=np.float64),
                    [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"min": float(q[0]), "q25": float(q[1]), "median": float(q[2]),
            "q75": float(q[3]), "max": float(q[4])}


def _write_csv(path, hash_line, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# config_hash: %s\n" % hash_line)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else
                              (repr(v) if isinstance(v, float) else str(v))
                              for v in row) + "\n")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def run_pipeline(cfg):
    """Similarity, clustering and scoring for every (measure, repetition).

    Writes report.json, results.csv and summary.csv into cfg.out; a
    k-means run with a single repetition also writes one restart table per
    measure. Returns the report dict.
    """
    _validate_for_clustering(cfg)
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()

    results = []
    per_measure = {m: [] for m in cfg.measures}
    restart_tables = {}
    for rep, rep_seed, ds, refs in _iter_reps(cfg):
        if ds.n_records == 0 or ds.n_items < 2:
            continue
        ref_name, ref_map = _primary_ref(refs)
        for measure in cfg.measures:
            m1 = build_similarity_matrix(ds, measure, cfg.min_support)
            k_used = _resolve_k(cfg, m1, refs, rep_seed)
            dist = item_distance(m1, cfg.metric)
            entry = {
                "measure": measure, "rep": rep, "seed": rep_seed,
                "method": cfg.method, "metric": cfg.metric, "k": k_used,
                "reference": ref_name,
            }
            if cfg.method == "ward":
                c = ward_cluster(dist, k_used)
                entry["ari"] = ari(c, ref_map) if ref_map else None
                entry["wss"] = wss(dist, c)
            else:
                c = kmeans_cluster(m1, k_used, seed=rep_seed,
                                   restarts=cfg.restarts)
                rows = []
                aris = []
                for r_i, a in enumerate(c.restart_assignments):
                    part = dict(zip(c.items, (int(x) for x in a)))
                    a_r = ari(part, ref_map) if ref_map else None
                    w_r = wss(dist, part)
                    rows.append((r_i, a_r, w_r))
                    if a_r is not None:
                        aris.append(a_r)
                best = c.best_restart
                entry["ari"] = rows[best][1]
                entry["wss"] = rows[best][2]
                entry["best_restart"] = best
                if aris:
                    entry["restart_ari"] = dict(
                        _quantiles(aris),
                        mean=float(np.mean(aris)),
                        sd=float(np.std(aris)),
                    )
                if cfg.repetitions == 1:
                    restart_tables[measure] = rows
            results.append(entry)
            if entry["ari"] is not None:
                per_measure[measure].append(entry["ari"])

    summary = {}
    for measure in cfg.measures:
        vals = per_measure[measure]
        if vals:
            summary[measure] = {
                "reps": len(vals),
                "ari_mean": float(np.mean(vals)),
                "ari_sd": float(np.std(vals)),
            }
    report = {
        "format": "kcmap-report",
        "version": 1,
        "kind": "pipeline",
        "backend": _kernels.BACKEND,
        "config": cfg.canonical(),
        "config_hash": h,
        "results": results,
        "summary": summary,
    }
    _write_json(outdir / "report.json", report)
    _write_csv(outdir / "results.csv", h,
               ["measure", "rep", "seed", "method", "metric", "k",
                "reference", "ari", "wss"],
               [(e["measure"], e["rep"], e["seed"], e["method"], e["metric"],
                 e["k"], e["reference"], e["ari"], e["wss"])
                for e in results])
    _write_csv(outdir / "summary.csv", h,
               ["measure", "reps", "ari_mean", "ari_sd"],
               [(m, s["reps"], s["ari_mean"], s["ari_sd"])
                for m, s in sorted(summary.items())])
    for measure, rows in sorted(restart_tables.items()):
        _write_csv(outdir / ("restarts_%s.csv" % measure), h,
                   ["restart", "ari", "wss"], rows)
    return report


def run_gap(cfg):
    """Gap profile plus selected k per rule, for every configured measure.

    Writes gap_<measure>.csv per measure and one gap_report.json; returns
    the report dict.
    """
    if cfg.kmax < 2:
        raise ConfigError("kmax must be at least 2")
    if cfg.repetitions != 1:
        raise ConfigError("gap profiles run on a single repetition")
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()

    selection = {}
    profiles = {}
    for rep, rep_seed, ds, refs in _iter_reps(cfg):
        if ds.n_records == 0 or ds.n_items < 2:
            continue
        for measure in cfg.measures:
            m1 = build_similarity_matrix(ds, measure, cfg.min_support)
            profile = gap_statistic(m1, metric=cfg.metric, kmax=cfg.kmax,
                                    B=cfg.gap_b, seed=rep_seed)
            selection[measure] = {rule: select_k(profile, rule)
                                  for rule in GAP_RULES}
            profiles[measure] = profile.to_json()
            profile.save_csv(outdir / ("gap_%s.csv" % measure),
                             header_comment="config_hash: %s" % h)
    report = {
        "format": "kcmap-report",
        "version": 1,
        "kind": "gap",
        "backend": _kernels.BACKEND,
        "config": cfg.canonical(),
        "config_hash": h,
        "selection": selection,
        "profiles": profiles,
    }
    _write_json(outdir / "gap_report.json", report)
    return report
