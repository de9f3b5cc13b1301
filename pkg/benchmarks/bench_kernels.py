"""Time the compiled kernels against the numpy fallback.

Runs each kernel on inputs shaped like a default simulation run (1000
learners, 200 items, 20 components) and prints per-call wall time for
both engines. Usage:

    python3 benchmarks/bench_kernels.py [--learners L] [--items N]
        [--kcs K] [--repeat R]
"""

import argparse
import time

import numpy as np

from kcmap._kernels import HAVE_COMPILED, pykernels

if HAVE_COMPILED:
    from kcmap._kernels import cykernels


def make_inputs(learners, items, kcs, rng):
    correct = rng.integers(0, 2, size=(learners, items)).astype(np.int8)
    # roughly 10% of cells unanswered, positions are per-learner shuffles
    correct[rng.random((learners, items)) < 0.1] = -1
    position = np.empty((learners, items), dtype=np.int32)
    for l in range(learners):
        position[l] = rng.permutation(items)
    position[correct == -1] = -1

    raw = rng.random((items, items))
    dist = np.sqrt(raw + raw.T)
    np.fill_diagonal(dist, 0.0)

    sizes = np.full(kcs, items // kcs, dtype=np.int64)
    sizes[: items - sizes.sum()] += 1
    kc_ptr = np.zeros(kcs + 1, dtype=np.int32)
    kc_ptr[1:] = np.cumsum(sizes)
    ranks_flat = rng.permutation(items).astype(np.int32)
    uniforms = rng.random((learners, kcs + 2 * items))
    rates = rng.random((learners, kcs))

    return {
        "pair_cell_counts": (correct, position),
        "ward_linkage": (dist,),
        "bkt_responses": (uniforms, rates, kc_ptr, ranks_flat, 0.2, 0.1, 0.0),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--learners", type=int, default=1000)
    ap.add_argument("--items", type=int, default=200)
    ap.add_argument("--kcs", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    inputs = make_inputs(args.learners, args.items, args.kcs, rng)

    print("shape: %d learners, %d items, %d components; best of %d runs"
          % (args.learners, args.items, args.kcs, args.repeat))
    if not HAVE_COMPILED:
        print("compiled extension not available; timing the numpy engine only")
    header = "%-18s %12s %12s %9s" % ("kernel", "numpy", "compiled", "speedup")
    print(header)
    print("-" * len(header))
    for name, call_args in inputs.items():
        t_py = best_of(getattr(pykernels, name), call_args, args.repeat)
        if HAVE_COMPILED:
            t_cy = best_of(getattr(cykernels, name), call_args, args.repeat)
            print("%-18s %10.1f ms %10.1f ms %8.1fx"
                  % (name, t_py * 1e3, t_cy * 1e3, t_py / t_cy))
        else:
            print("%-18s %10.1f ms %12s %9s" % (name, t_py * 1e3, "-", "-"))


if __name__ == "__main__":
    main()
