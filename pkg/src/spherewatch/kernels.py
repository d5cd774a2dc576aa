"""Numerical kernels shared by the analysis modules.

Each kernel is written once as plain Python over numpy arrays and compiled
with numba's @njit when available. Setting the environment variable
SPHEREWATCH_PURE_NUMPY=1 (or running without numba installed) keeps the
interpreted path. Both paths execute the same source, so results are
identical; only speed differs. benchmarks/bench_kernels.py compares them.

Kernels avoid numpy's vectorized reductions on purpose: explicit loops give
identical summation order under both paths and compile to tight machine code
under numba.
"""

from __future__ import annotations

import math
import os

import numpy as np

if os.environ.get("SPHEREWATCH_PURE_NUMPY") == "1":
    njit = None
else:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - mirror always carries numba
        njit = None

JIT_ENABLED = njit is not None


def maybe_jit(func):
    """Compile with numba when enabled, otherwise return func unchanged."""
    if njit is None:
        return func
    return njit(cache=True)(func)


# MINSTD Lehmer generator: multiplications stay below 2**47, so plain int64
# arithmetic is exact under both the interpreted and the compiled path.
RNG_MODULUS = 2147483647


def rng_state_from_seed(seed: int) -> int:
    """Map any integer seed onto a valid MINSTD state (1..RNG_MODULUS-1)."""
    return (abs(int(seed)) % (RNG_MODULUS - 1)) + 1


@maybe_jit
def rng_next(state: int) -> int:
    return (48271 * state) % RNG_MODULUS


@maybe_jit
def digamma(x: float) -> float:
    """Digamma via upward recurrence and the asymptotic series.

    Accurate to ~1e-13 for x > 0, which keeps the interpreted and compiled
    LDA paths in agreement with scipy.special.psi at test tolerances.
    """
    value = 0.0
    while x < 8.0:
        value -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    value += math.log(x) - 0.5 * inv
    value -= inv2 * (
        1.0 / 12.0
        - inv2 * (1.0 / 120.0
                  - inv2 * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0
                                      - inv2 * (1.0 / 132.0
                                                - inv2 * (691.0 / 32760.0)))))
    )
    return value


@maybe_jit
def lda_local_step(exp_elog_beta, indptr, word_ids, word_cts, alpha,
                   max_iters, tol):
    """Per-document variational step for one mini-batch.

    exp_elog_beta: K x V matrix exp(E[log beta]).
    indptr/word_ids/word_cts: CSR-style batch; word_cts are float counts.
    Returns (gamma: D x K, sstats: K x V) where sstats still has to be
    multiplied elementwise by exp_elog_beta by the caller (Blei-style trick:
    the phi contribution factorizes).
    """
    n_topics, vocab_size = exp_elog_beta.shape
    n_docs = indptr.shape[0] - 1
    gamma = np.empty((n_docs, n_topics))
    sstats = np.zeros((n_topics, vocab_size))
    exp_elog_theta = np.empty(n_topics)
    for d in range(n_docs):
        start = indptr[d]
        end = indptr[d + 1]
        n_terms = end - start
        total = 0.0
        for j in range(n_terms):
            total += word_cts[start + j]
        # Deterministic init: symmetric prior plus an even share of the mass.
        for k in range(n_topics):
            gamma[d, k] = alpha + total / n_topics
        gsum = 0.0
        for k in range(n_topics):
            gsum += gamma[d, k]
        dg_sum = digamma(gsum)
        for k in range(n_topics):
            exp_elog_theta[k] = math.exp(digamma(gamma[d, k]) - dg_sum)
        phinorm = np.empty(n_terms)
        for j in range(n_terms):
            acc = 1e-100
            for k in range(n_topics):
                acc += exp_elog_theta[k] * exp_elog_beta[k, word_ids[start + j]]
            phinorm[j] = acc
        for _ in range(max_iters):
            meanchange = 0.0
            for k in range(n_topics):
                dot = 0.0
                for j in range(n_terms):
                    dot += (word_cts[start + j] / phinorm[j]) \
                        * exp_elog_beta[k, word_ids[start + j]]
                updated = alpha + exp_elog_theta[k] * dot
                meanchange += abs(updated - gamma[d, k])
                gamma[d, k] = updated
            gsum = 0.0
            for k in range(n_topics):
                gsum += gamma[d, k]
            dg_sum = digamma(gsum)
            for k in range(n_topics):
                exp_elog_theta[k] = math.exp(digamma(gamma[d, k]) - dg_sum)
            for j in range(n_terms):
                acc = 1e-100
                for k in range(n_topics):
                    acc += exp_elog_theta[k] \
                        * exp_elog_beta[k, word_ids[start + j]]
                phinorm[j] = acc
            if meanchange / n_topics < tol:
                break
        for j in range(n_terms):
            ratio = word_cts[start + j] / phinorm[j]
            for k in range(n_topics):
                sstats[k, word_ids[start + j]] += exp_elog_theta[k] * ratio
    return gamma, sstats


@maybe_jit
def sgns_train_epoch(doc_tokens, doc_offsets, syn0, syn1, neg_table,
                     alpha_start, alpha_min, negative, words_done,
                     total_words, rng_state):
    """One skip-gram/negative-sampling epoch over flattened documents.

    doc_tokens: int32 token indices, concatenated documents.
    doc_offsets: int64 offsets, len = n_docs + 1.
    The context window is the whole document. For every ordered (input,
    output) position pair the output token is trained against `negative`
    draws from neg_table. Learning rate decays linearly per input position
    across the full training plan (total_words positions).

    Returns (words_done, rng_state) so the caller can chain epochs.
    """
    dim = syn0.shape[1]
    table_size = neg_table.shape[0]
    work = np.empty(dim)
    n_docs = doc_offsets.shape[0] - 1
    for d in range(n_docs):
        start = doc_offsets[d]
        end = doc_offsets[d + 1]
        for i in range(start, end):
            frac = 1.0 - words_done / total_words
            lr = alpha_start * frac
            if lr < alpha_min:
                lr = alpha_min
            words_done += 1
            center = doc_tokens[i]
            for j in range(start, end):
                if j == i:
                    continue
                outp = doc_tokens[j]
                for c in range(dim):
                    work[c] = 0.0
                for step in range(negative + 1):
                    if step == 0:
                        target = outp
                        label = 1.0
                    else:
                        rng_state = (48271 * rng_state) % 2147483647
                        target = neg_table[rng_state % table_size]
                        if target == outp:
                            continue
                        label = 0.0
                    f = 0.0
                    for c in range(dim):
                        f += syn0[center, c] * syn1[target, c]
                    g = (label - 1.0 / (1.0 + math.exp(-f))) * lr
                    for c in range(dim):
                        work[c] += g * syn1[target, c]
                    for c in range(dim):
                        syn1[target, c] += g * syn0[center, c]
                for c in range(dim):
                    syn0[center, c] += work[c]
    return words_done, rng_state


@maybe_jit
def kmeans_assign(points, centroids):
    """Nearest-centroid assignment. Returns (labels, inertia).

    Squared Euclidean distances; ties resolve to the lowest centroid index.
    """
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    inertia = 0.0
    for i in range(n):
        best = -1
        best_dist = np.inf
        for c in range(k):
            dist = 0.0
            for j in range(dim):
                diff = points[i, j] - centroids[c, j]
                dist += diff * diff
            if dist < best_dist:
                best_dist = dist
                best = c
        labels[i] = best
        inertia += best_dist
    return labels, inertia


@maybe_jit
def kmeans_update(points, labels, k):
    """Mean-update step. Returns (centroids, counts); empty clusters keep
    zero vectors and count 0 for the caller's repair rule."""
    n, dim = points.shape
    centroids = np.zeros((k, dim))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(dim):
            centroids[c, j] += points[i, j]
    for c in range(k):
        if counts[c] > 0:
            for j in range(dim):
                centroids[c, j] /= counts[c]
    return centroids, counts


@maybe_jit
def squared_distances_to_point(points, center):
    """Row-wise squared Euclidean distance to one vector."""
    n, dim = points.shape
    out = np.empty(n)
    for i in range(n):
        dist = 0.0
        for j in range(dim):
            diff = points[i, j] - center[j]
            dist += diff * diff
        out[i] = dist
    return out
