"""Time every hot kernel with its numba and numpy implementation.

    python benchmarks/bench_kernels.py [--repeat 200] [--json out.json]

Inputs are sized like one shot of real data: 567-bin profiles, 256 Otsu bins,
a 300-pair signed-rank test and the 22 -> 294 -> 567 forward pass.
"""
import argparse
import json
import time

import numpy as np

from vprd import _kernels
from vprd.mlp import PAPER_DIMS
from vprd.preprocess import gaussian_kernel


def _cases():
    r = np.random.default_rng(0)
    x = r.random(567)
    weights = gaussian_kernel(10)
    values = r.exponential(size=567)
    edges = values.min() + (values.max() - values.min()) * np.arange(257) / 256
    edges[-1] = values.max()
    doubled = np.rint(2 * (np.arange(1, 301))).astype(np.int64)
    d_in, d_h, d_out = PAPER_DIMS
    dense = (r.normal(size=d_in), r.normal(size=d_in), r.uniform(0.5, 2, d_in), np.empty(d_in),
             r.normal(size=(d_in, d_h)), r.normal(size=d_h), r.normal(size=(d_h, d_out)),
             r.normal(size=d_out), np.empty(d_h), np.empty(d_out))
    return {
        "smooth_reflect": (x, weights),
        "otsu_best_edge": (values, edges),
        "signed_rank_counts": (doubled,),
        "dense_relu_forward_into": dense,
    }


def _time(fn, args, repeat):
    fn(*args)  # compile / warm caches
    samples = np.empty(repeat)
    for i in range(repeat):
        t0 = time.perf_counter_ns()
        fn(*args)
        samples[i] = time.perf_counter_ns() - t0
    return float(np.median(samples)) / 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, inputs in _cases().items():
        nb = _time(getattr(_kernels, name + "_nb"), inputs, args.repeat)
        npy = _time(getattr(_kernels, name + "_np"), inputs, args.repeat)
        rows.append({"kernel": name, "numba_us": nb, "numpy_us": npy, "speedup": npy / nb})
    print(f"{'kernel':<26}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for row in rows:
        print(f"{row['kernel']:<26}{row['numba_us']:>12.2f}{row['numpy_us']:>12.2f}{row['speedup']:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
