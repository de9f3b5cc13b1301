"""Synthetic response data with known component structure.

Each learner is a set of independent two-state HMMs, one per knowledge
component: the latent state starts unmastered, each item emission is
correct with probability 1 - p_slip when mastered and p_guess otherwise,
and after every emission an unmastered state transitions to mastered with
the learner-and-component learning rate. There is no forgetting. Learning
rates combine a per-learner and a per-component uniform draw on the logit
scale.

Items are laid out in one global order shared by all learners: components
appear as blocks in index order, each block holding the component's first
`contiguous_items` items; the remaining items are deferred into uniformly
chosen slots between later blocks.

All randomness flows through named substreams of the master seed (item
placement, rate draws, one stream per learner), so datasets are
reproducible and learners could be generated in parallel without changing
the output.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .dataset import FIXED, ResponseDataset
from .errors import DataError

_PLACEMENT_KEY = (0,)
_RATES_KEY = (1,)
_LEARNER_KEY = 2


@dataclass(frozen=True)
class SimConfig:
    learners: int = 1000
    kcs: int = 20
    items: int = 200
    p_l0: float = 0.0
    p_slip: float = 0.1
    p_guess: float = 0.2
    contiguous_items: int = 6
    seed: int = 0

    def __post_init__(self):
        if min(self.learners, self.kcs, self.items) < 1:
            raise ValueError("learners, kcs and items must be positive")
        if self.items < self.kcs:
            raise ValueError("need at least one item per component")
        for name in ("p_l0", "p_slip", "p_guess"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError("%s must be in [0, 1], got %r" % (name, v))
        if self.contiguous_items < 1:
            raise ValueError("contiguous_items must be positive")

    def to_dict(self):
        return asdict(self)


def combine_rate(p_student, p_skill):
    """Blend two learning-rate components on the logit scale."""
    for v in (p_student, p_skill):
        if not 0.0 < v < 1.0:
            raise ValueError("rates must lie strictly inside (0, 1), got %r" % v)
    z = math.log(p_student / (1.0 - p_student)) + math.log(p_skill / (1.0 - p_skill))
    return 1.0 / (1.0 + math.exp(-z))


def kc_sizes(items, kcs):
    """Component sizes as even as possible, earlier components get the extras."""
    base, extra = divmod(items, kcs)
    return [base + 1 if k < extra else base for k in range(kcs)]


def place_items(config, rng=None):
    """Global item order: contiguous blocks plus deferred items.

    Items 0..N-1 belong to components in index order (component k owns a
    consecutive range of item indices). The first min(contiguous_items,
    size) items of each component form its block; every other item draws a
    uniform slot among the gaps after later blocks and the gaps are
    shuffled. Returns (position, kc_of_item) arrays over item indices.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=config.seed, spawn_key=_PLACEMENT_KEY))
    K, N = config.kcs, config.items
    sizes = kc_sizes(N, K)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    kc_of_item = np.repeat(np.arange(K, dtype=np.int32), sizes)
    blocks = []
    gaps = [[] for _ in range(K + 1)]  # gaps[g] follows block g-1
    for k in range(K):
        own = list(range(starts[k], starts[k + 1]))
        c = min(config.contiguous_items, sizes[k])
        blocks.append(own[:c])
        for item in own[c:]:
            g = int(rng.integers(k + 1, K + 1))
            gaps[g].append(item)
    order = []
    for k in range(K):
        order.extend(blocks[k])
        deferred = np.array(gaps[k + 1], dtype=np.int64)
        rng.shuffle(deferred)
        order.extend(int(i) for i in deferred)
    position = np.empty(N, dtype=np.int32)
    position[order] = np.arange(N, dtype=np.int32)
    return position, kc_of_item


def simulate_learner(position, kc_of_item, rates_row, config, rng,
                     return_trace=False):
    """One learner's responses, drawn in the documented stream layout.

    Per component: one initial-mastery draw, then per item one emission
    draw and one transition draw (the transition draw is consumed even
    when already mastered, so streams have a fixed shape). Returns the
    response row indexed by presentation rank; with return_trace also the
    per-component latent state sequences (state when answering each item).
    """
    N = config.items
    resp = np.zeros(N, dtype=np.int8)
    p_known = 1.0 - config.p_slip
    traces = []
    for k in range(config.kcs):
        own_ranks = np.sort(position[kc_of_item == k])
        mastered = rng.random() < config.p_l0
        trace = []
        for rank in own_ranks:
            trace.append(mastered)
            thresh = p_known if mastered else config.p_guess
            resp[rank] = rng.random() < thresh
            u = rng.random()
            if not mastered and u < rates_row[k]:
                mastered = True
        traces.append(trace)
    return (resp, traces) if return_trace else resp


def _draw_rates(config):
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=_RATES_KEY))

    def strictly_inside(size):
        v = rng.random(size)
        while True:
            zero = v == 0.0
            if not zero.any():
                return v
            v[zero] = rng.random(int(zero.sum()))

    p_student = strictly_inside(config.learners)
    p_skill = strictly_inside(config.kcs)
    z = (np.log(p_student / (1.0 - p_student))[:, None]
         + np.log(p_skill / (1.0 - p_skill))[None, :])
    return p_student, p_skill, 1.0 / (1.0 + np.exp(-z))


class SimDataset:
    """Generated responses plus the ground truth that produced them."""

    def __init__(self, responses, labels, kc_of_item, position, onset, config):
        self.responses = responses
        self.labels = labels
        self.kc_of_item = kc_of_item
        self.position = position
        self.onset = onset
        self.config = config

    def manifest(self):
        return {
            "format": "kcmap-sim-manifest",
            "version": 1,
            "config": self.config.to_dict(),
        }

    def save(self, outdir, config_hash=None):
        outdir.mkdir(parents=True, exist_ok=True)
        comment = "config_hash: %s" % config_hash if config_hash else None
        self.responses.save_csv(outdir / "responses.csv", comment)
        save_truth_csv(self.labels, outdir / "truth.csv", comment)
        manifest = self.manifest()
        if config_hash:
            manifest["config_hash"] = config_hash
        with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True)
            fh.write("\n")


def item_name(i, n_items):
    return "q%0*d" % (len(str(n_items - 1)), i)


def kc_name(k, n_kcs):
    return "kc%0*d" % (len(str(n_kcs - 1)), k)


def generate_dataset(config):
    """Full L x N response dataset under the configured generator.

    Deterministic in config.seed: placement, rates and each learner draw
    from their own named substreams.
    """
    L, K, N = config.learners, config.kcs, config.items
    position, kc_of_item = place_items(config)
    _, _, rates = _draw_rates(config)

    sizes = kc_sizes(N, K)
    kc_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int32)
    ranks_flat = np.concatenate(
        [np.sort(position[kc_of_item == k]) for k in range(K)]).astype(np.int32)

    uniforms = np.empty((L, K + 2 * N), dtype=np.float64)
    for l in range(L):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=config.seed, spawn_key=(_LEARNER_KEY, l)))
        uniforms[l] = rng.random(K + 2 * N)
    resp_by_rank, onset = _kernels.bkt_responses(
        uniforms, rates, kc_ptr, ranks_flat,
        config.p_guess, config.p_slip, config.p_l0)

    learners = ["s%0*d" % (len(str(L - 1)), l) for l in range(L)]
    items = [item_name(i, N) for i in range(N)]
    lidx = np.repeat(np.arange(L, dtype=np.int32), N)
    iidx = np.tile(np.arange(N, dtype=np.int32), L)
    pos = np.tile(position, L)
    corr = resp_by_rank[:, position].reshape(-1)
    ds = ResponseDataset(learners, items, lidx, iidx, pos, corr, FIXED)
    labels = {items[i]: kc_name(int(kc_of_item[i]), K) for i in range(N)}
    return SimDataset(ds, labels, kc_of_item, position, onset, config)


def save_truth_csv(labels, path, header_comment=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write("# %s\n" % header_comment)
        w = csv.writer(fh)
        w.writerow(["item_id", "kc"])
        for item in sorted(labels):
            w.writerow([item, labels[item]])


def load_truth_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != ["item_id", "kc"]:
        raise DataError("%s: expected header item_id,kc" % (path,))
    return {row[0]: row[1] for row in reader if row}
