"""Command line front end.

Subcommands mirror the pipeline stages so each step can run standalone,
talking to its neighbours through the documented CSV/JSON formats:

    simulate    write a synthetic response dataset plus its ground truth
    similarity  response CSV -> pairwise similarity matrix
    distance    similarity JSON -> item distance matrix
    cluster     similarity/distance -> cluster assignment (and merge tree)
    evaluate    assignment vs reference labels -> ARI (and WSS)
    gap         gap-statistic profile and selected k per rule
    pipeline    the full run driven by one config file

Exit codes: 0 success, 2 bad configuration or usage, 3 malformed data.
KCMAP_OUT_DIR sets the default output directory. Every emitted CSV starts
with a `# config_hash:` comment and every JSON carries a config_hash
field, tying outputs to the exact parameters that produced them.
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from .bktsim import generate_dataset, load_truth_csv
from .cluster import (
    METRICS,
    item_distance,
    kmeans_cluster,
    load_clustering_csv,
    load_distance_json,
    ward_cluster,
)
from .dataset import (
    GRANULARITIES,
    ORDER_MODES,
    filter_learners,
    load_labels,
    load_responses,
    prune_singletons,
)
from .errors import ConfigError, DataError
from .evaluation import ari, wss
from .pipeline import build_config, parse_config_file, run_gap, run_pipeline
from .similarity import MEASURES, build_similarity_matrix, load_similarity_json

ENV_OUT = "KCMAP_OUT_DIR"

# config keys settable as flags on config-driven subcommands; flags win
_OVERRIDE_KEYS = (
    "mode", "responses", "labels", "truth", "measures", "metric", "method",
    "k", "granularity", "gap_rule", "restarts", "min_support", "kmax",
    "gap_b", "repetitions", "seed", "filter_min_items", "filter_min_success",
    "learners", "kcs", "items", "p_l0", "p_slip", "p_guess",
    "contiguous_items", "out",
)


def _default_out():
    return os.environ.get(ENV_OUT, ".")


def _params_hash(params):
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _dump_json(path, obj, config_hash):
    obj = dict(obj)
    obj["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_config(args):
    file_pairs = parse_config_file(args.config) if args.config else {}
    overrides = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if "out" not in overrides and "out" not in file_pairs:
        overrides["out"] = _default_out()
    return build_config(file_pairs, overrides)


def _add_config_flags(p, keys):
    p.add_argument("--config", help="key = value config file")
    for key in keys:
        p.add_argument("--" + key.replace("_", "-"), dest=key)


# each subcommand returns 0; errors surface as exceptions mapped in main()


def cmd_simulate(args):
    cfg = _load_config(args)
    sim = generate_dataset(cfg.sim_config(cfg.seed))
    outdir = Path(cfg.out)
    h = cfg.config_hash()
    sim.save(outdir, config_hash=h)
    print("wrote %s responses.csv truth.csv manifest.json (config_hash %s)"
          % (outdir, h))
    return 0


def _maybe_filter(ds, args):
    if args.filter:
        return filter_learners(ds, args.min_items, args.min_success)
    return ds


def cmd_similarity(args):
    ds = load_responses(args.responses, args.order_mode)
    ds = _maybe_filter(ds, args)
    m1 = build_similarity_matrix(ds, args.measure, args.min_support)
    h = _params_hash({
        "cmd": "similarity", "responses": args.responses,
        "order_mode": args.order_mode, "filter": bool(args.filter),
        "min_items": args.min_items, "min_success": args.min_success,
        "measure": args.measure, "min_support": args.min_support,
    })
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    base = "similarity_%s" % args.measure
    m1.save_csv(outdir / (base + ".csv"), "config_hash: %s" % h)
    _dump_json(outdir / (base + ".json"), m1.to_json(), h)
    print("wrote %s/%s.{csv,json} (config_hash %s)" % (outdir, base, h))
    return 0


def cmd_distance(args):
    m1 = load_similarity_json(args.similarity)
    d = item_distance(m1, args.metric)
    h = _params_hash({"cmd": "distance", "similarity": args.similarity,
                      "metric": args.metric})
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    d.save_csv(outdir / "distance.csv", "config_hash: %s" % h)
    _dump_json(outdir / "distance.json", d.to_json(), h)
    print("wrote %s/distance.{csv,json} (config_hash %s)" % (outdir, h))
    return 0


def cmd_cluster(args):
    if (args.similarity is None) == (args.distance is None):
        raise ConfigError("give exactly one of --similarity or --distance")
    h = _params_hash({
        "cmd": "cluster", "similarity": args.similarity,
        "distance": args.distance, "metric": args.metric,
        "method": args.method, "k": args.k, "seed": args.seed,
        "restarts": args.restarts,
    })
    if args.method == "kmeans":
        if args.similarity is None:
            raise ConfigError("kmeans clusters similarity rows; "
                              "give --similarity")
        if args.seed is None:
            raise ConfigError("kmeans needs --seed")
        m1 = load_similarity_json(args.similarity)
        c = kmeans_cluster(m1, args.k, seed=args.seed, restarts=args.restarts)
    else:
        if args.distance is not None:
            d = load_distance_json(args.distance)
        else:
            d = item_distance(load_similarity_json(args.similarity),
                              args.metric)
        c = ward_cluster(d, args.k)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    c.save_csv(outdir / "clusters.csv", "config_hash: %s" % h)
    wrote = ["clusters.csv"]
    if c.merges is not None:
        _dump_json(outdir / "tree.json", c.tree_json(), h)
        wrote.append("tree.json")
    print("wrote %s/%s (config_hash %s)" % (outdir, " ".join(wrote), h))
    return 0


def cmd_evaluate(args):
    if (args.truth is None) == (args.labels is None):
        raise ConfigError("give exactly one of --truth or --labels")
    if args.labels is not None and args.granularity is None:
        raise ConfigError("--labels needs --granularity")
    c = load_clustering_csv(args.assignment)
    if args.truth is not None:
        ref = load_truth_csv(args.truth)
        ref_name = "truth"
    else:
        ls = prune_singletons(load_labels(args.labels))
        ref = ls.map(args.granularity)
        ref_name = args.granularity
    h = _params_hash({
        "cmd": "evaluate", "assignment": args.assignment,
        "truth": args.truth, "labels": args.labels,
        "granularity": args.granularity, "distance": args.distance,
    })
    out = {
        "format": "kcmap-evaluation",
        "version": 1,
        "reference": ref_name,
        "n_items": len(set(c.items) & set(ref)),
        "ari": ari(c, ref),
    }
    if args.distance is not None:
        out["wss"] = wss(load_distance_json(args.distance), c)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "evaluation.json", out, h)
    print("ari %r (reference %s); wrote %s/evaluation.json"
          % (out["ari"], ref_name, outdir))
    return 0


def cmd_gap(args):
    report = run_gap(_load_config(args))
    for measure, sel in sorted(report["selection"].items()):
        print("%s: first_max k=%d, first_se_max k=%d"
              % (measure, sel["first_max"], sel["first_se_max"]))
    return 0


def cmd_pipeline(args):
    report = run_pipeline(_load_config(args))
    for measure, s in sorted(report["summary"].items()):
        print("%s: mean ari %.4f (sd %.4f, %d reps)"
              % (measure, s["ari_mean"], s["ari_sd"], s["reps"]))
    if not report["summary"]:
        print("empty report (no scorable results)")
    return 0


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="kcmap",
        description="Map assessment items to knowledge components from "
                    "binary response data.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_config_flags(p, ("seed", "learners", "kcs", "items", "p_l0",
                          "p_slip", "p_guess", "contiguous_items", "out"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("similarity", help="pairwise item similarity")
    p.add_argument("--responses", required=True)
    p.add_argument("--measure", default="kappa_learning", choices=MEASURES)
    p.add_argument("--min-support", type=int, default=20)
    p.add_argument("--order-mode", default="fixed", choices=ORDER_MODES)
    p.add_argument("--filter", action="store_true",
                   help="drop low-activity learners first")
    p.add_argument("--min-items", type=int, default=50)
    p.add_argument("--min-success", type=float, default=0.25)
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("distance", help="item distances from similarity rows")
    p.add_argument("--similarity", required=True,
                   help="similarity JSON from the similarity step")
    p.add_argument("--metric", default="pearson_distance", choices=METRICS)
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("cluster", help="group items into components")
    p.add_argument("--similarity")
    p.add_argument("--distance")
    p.add_argument("--metric", default="pearson_distance", choices=METRICS)
    p.add_argument("--method", default="ward", choices=("ward", "kmeans"))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="score an assignment against labels")
    p.add_argument("--assignment", required=True)
    p.add_argument("--truth")
    p.add_argument("--labels")
    p.add_argument("--granularity", choices=GRANULARITIES)
    p.add_argument("--distance")
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gap", help="gap-statistic cluster count selection")
    _add_config_flags(p, _OVERRIDE_KEYS)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("pipeline", help="full configured run")
    _add_config_flags(p, _OVERRIDE_KEYS)
    p.set_defaults(func=cmd_pipeline)

    return ap


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except DataError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
