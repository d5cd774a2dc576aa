"""Compare the numba-compiled kernels against the pure-numpy fallback.

The kernels module picks its path at import time from SPHEREWATCH_PURE_NUMPY,
so this script re-runs itself in a subprocess per mode and prints a table.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workloads mirror production call sites: the LDA local step on a 256-doc
mini-batch, one skip-gram epoch over 4000 mention docs, and k-means
assign/update/seeding passes on 20000 points.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads():
    from spherewatch import kernels

    rng = np.random.default_rng(0)

    n_topics, vocab = 32, 2000
    docs, words_per_doc = 256, 40
    ee_beta = rng.gamma(1.0, 1.0, size=(n_topics, vocab))
    indptr = np.arange(docs + 1, dtype=np.int64) * words_per_doc
    word_ids = rng.integers(0, vocab, size=docs * words_per_doc,
                            dtype=np.int64)
    word_cts = rng.integers(1, 5, size=docs * words_per_doc).astype(float)

    dim, n_tokens, n_docs_sg, doc_len = 64, 2000, 4000, 8
    flat = rng.integers(0, n_tokens, size=n_docs_sg * doc_len,
                        dtype=np.int32)
    offsets = np.arange(n_docs_sg + 1, dtype=np.int64) * doc_len
    syn0 = (rng.random((n_tokens, dim)) - 0.5) / dim
    syn1 = np.zeros((n_tokens, dim))
    neg_table = rng.integers(0, n_tokens, size=1_000_000, dtype=np.int64)
    total = len(flat)

    points = rng.normal(size=(20_000, 64))
    centroids = rng.normal(size=(16, 64))
    labels = rng.integers(0, 16, size=len(points), dtype=np.int64)

    return {
        "lda_local_step (256 docs x 32 topics)": lambda: kernels.lda_local_step(
            ee_beta, indptr, word_ids, word_cts, 0.1, 100, 1e-3),
        "sgns_train_epoch (32k positions, dim 64)": lambda: kernels.sgns_train_epoch(
            flat, offsets, syn0.copy(), syn1.copy(), neg_table, 0.025,
            0.025e-4, 5, 0, total, kernels.rng_state_from_seed(1)),
        "kmeans_assign (20k x 64, k=16)": lambda: kernels.kmeans_assign(
            points, centroids),
        "kmeans_update (20k x 64, k=16)": lambda: kernels.kmeans_update(
            points, labels, 16),
        "squared_distances (20k x 64)": lambda: kernels.squared_distances_to_point(
            points, centroids[0]),
    }


def _measure(repeat):
    from spherewatch import kernels

    results = {"jit": kernels.JIT_ENABLED, "timings": {}}
    for name, call in _workloads().items():
        call()  # warmup; includes numba compilation when enabled
        best = min(_timed(call) for _ in range(repeat))
        results["timings"][name] = best
    return results


def _timed(call):
    start = time.perf_counter()
    call()
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed runs per kernel (best is kept)")
    parser.add_argument("--measure", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.measure:
        json.dump(_measure(args.repeat), sys.stdout)
        return

    modes = {}
    for mode, extra_env in (("numba", {"SPHEREWATCH_PURE_NUMPY": "0"}),
                            ("pure-numpy", {"SPHEREWATCH_PURE_NUMPY": "1"})):
        env = dict(os.environ, **extra_env)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--measure",
             "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True)
        modes[mode] = json.loads(out.stdout)

    if not modes["numba"]["jit"]:
        print("note: numba unavailable, both columns ran interpreted")
    width = max(len(n) for n in modes["numba"]["timings"])
    print(f"{'kernel':<{width}}  {'numba':>10}  {'pure-numpy':>10}  speedup")
    for name, jit_s in modes["numba"]["timings"].items():
        pure_s = modes["pure-numpy"]["timings"][name]
        print(f"{name:<{width}}  {jit_s * 1e3:>8.2f}ms  "
              f"{pure_s * 1e3:>8.2f}ms  {pure_s / jit_s:>6.1f}x")


if __name__ == "__main__":
    main()
