"""Online variational LDA over daily pooled documents.

Training follows the classic online variational Bayes recipe: per
mini-batch, a per-document local step iterates the variational
document-topic parameters to convergence, then the global topic-word
parameters move along

    lambda <- (1 - rho_t) * lambda + rho_t * lambda_hat
    rho_t   = (tau0 + t) ** (-kappa)          t = batch counter
    lambda_hat = eta + (D / |batch|) * sufficient statistics

The local step runs in kernels.lda_local_step so the hot loop can be
jitted; everything else is plain numpy.

Perplexity is exp(-L / N) where L is the per-word predictive log
likelihood under the converged variational document distribution
(log theta_bar . beta_bar per token) and N the token count. A model
with uniform rows scores exactly V under this definition.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import psi

from . import kernels

LOCAL_STEP_TOL = 1e-3
LOCAL_STEP_MAX_ITERS = 100
MIN_TOKEN_FREQ = 5


class EmptyCorpus(ValueError):
    """No trainable documents (or an empty pruned vocabulary)."""


class NonFiniteUpdate(RuntimeError):
    def __init__(self, batch_index: int):
        super().__init__(f"non-finite lambda after batch {batch_index}")
        self.batch_index = batch_index


class GridEmpty(ValueError):
    """Grid search invoked with zero parameter combinations."""


class ZeroTopicMass(ValueError):
    """Contribution curve requested for a topic with zero total mass."""


def _tokens(doc) -> Sequence[str]:
    return doc.tokens if hasattr(doc, "tokens") else doc


@dataclass
class TopicModel:
    n_topics: int
    vocabulary: Dict[str, int]
    lam: np.ndarray  # K x V, strictly positive
    doc_topic_prior: float
    topic_word_prior: float
    learn_decay: float
    learning_offset: float
    batch_size: int
    documents_seen: int = 0

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def topic_word_distributions(self) -> np.ndarray:
        return self.lam / self.lam.sum(axis=1, keepdims=True)

    def top_terms(self, n: int = 20) -> List[List[str]]:
        inverse = {i: tok for tok, i in self.vocabulary.items()}
        out = []
        for k in range(self.n_topics):
            order = np.argsort(-self.lam[k])[:n]
            out.append([inverse[int(i)] for i in order])
        return out


def build_vocabulary(docs: Iterable, min_freq: int = MIN_TOKEN_FREQ,
                     ) -> Dict[str, int]:
    """token -> index for tokens with corpus frequency >= min_freq."""
    freq = Counter()
    for doc in docs:
        freq.update(_tokens(doc))
    kept = sorted(tok for tok, n in freq.items() if n >= min_freq)
    return {tok: i for i, tok in enumerate(kept)}


def _bow(docs: Sequence, vocabulary: Mapping[str, int]):
    """Per-document (ids, counts) arrays; OOV tokens ignored."""
    rows = []
    for doc in docs:
        counts = Counter(vocabulary[t] for t in _tokens(doc)
                         if t in vocabulary)
        ids = np.fromiter(sorted(counts), dtype=np.int64,
                          count=len(counts))
        cts = np.array([counts[i] for i in ids], dtype=np.float64)
        rows.append((ids, cts))
    return rows


def _csr(rows) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, (ids, _) in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(ids)
    if rows:
        word_ids = np.concatenate([ids for ids, _ in rows])
        word_cts = np.concatenate([cts for _, cts in rows])
    else:
        word_ids = np.empty(0, dtype=np.int64)
        word_cts = np.empty(0, dtype=np.float64)
    return indptr, word_ids.astype(np.int64), word_cts.astype(np.float64)


def _exp_elog_beta(lam: np.ndarray) -> np.ndarray:
    return np.exp(psi(lam) - psi(lam.sum(axis=1))[:, None])


def _local_step(lam: np.ndarray, rows, alpha: float):
    ee_beta = _exp_elog_beta(lam)
    indptr, word_ids, word_cts = _csr(rows)
    gamma, sstats = kernels.lda_local_step(
        ee_beta, indptr, word_ids, word_cts, alpha,
        LOCAL_STEP_MAX_ITERS, LOCAL_STEP_TOL)
    return gamma, sstats * ee_beta


def _init_lambda(n_topics: int, vocab_size: int, seed: int) -> np.ndarray:
    # gamma(100, 1/100) init: mean 1, small jitter to break symmetry
    rng = np.random.default_rng(seed)
    return rng.gamma(100.0, 1.0 / 100.0, (n_topics, vocab_size))


def learning_rate(learning_offset: float, learn_decay: float,
                  t: int) -> float:
    """rho_t = (tau0 + t) ** (-kappa)."""
    return (learning_offset + t) ** (-learn_decay)


def fit_online(docs: Sequence, n_topics: int = 64,
               doc_topic_prior: Optional[float] = None,
               topic_word_prior: Optional[float] = None,
               batch_size: int = 256, learn_decay: float = 0.75,
               learning_offset: float = 256.0,
               min_freq: int = MIN_TOKEN_FREQ, passes: int = 1,
               seed: int = 0,
               vocabulary: Optional[Dict[str, int]] = None) -> TopicModel:
    """Train on a day-ordered document stream.

    docs can be PooledDocuments or raw token lists; feeding order is
    preserved (mini-batches chunk the stream as given).
    """
    docs = list(docs)
    if not docs:
        raise EmptyCorpus("no documents")
    if vocabulary is None:
        vocabulary = build_vocabulary(docs, min_freq)
    if not vocabulary:
        raise EmptyCorpus("vocabulary empty after frequency pruning")
    alpha = 1.0 / n_topics if doc_topic_prior is None else doc_topic_prior
    eta = 1.0 / n_topics if topic_word_prior is None else topic_word_prior

    rows = _bow(docs, vocabulary)
    n_docs = len(rows)
    lam = _init_lambda(n_topics, len(vocabulary), seed)

    t = 0
    for _ in range(passes):
        for start in range(0, n_docs, batch_size):
            batch = rows[start:start + batch_size]
            _, sstats = _local_step(lam, batch, alpha)
            lam_hat = eta + (n_docs / len(batch)) * sstats
            rho = learning_rate(learning_offset, learn_decay, t)
            lam = (1.0 - rho) * lam + rho * lam_hat
            if not np.isfinite(lam).all():
                raise NonFiniteUpdate(t)
            t += 1

    return TopicModel(
        n_topics=n_topics, vocabulary=dict(vocabulary), lam=lam,
        doc_topic_prior=alpha, topic_word_prior=eta,
        learn_decay=learn_decay, learning_offset=learning_offset,
        batch_size=batch_size, documents_seen=n_docs * passes)


def _infer_batch(model: TopicModel, docs: Sequence) -> np.ndarray:
    rows = _bow(docs, model.vocabulary)
    gamma, _ = _local_step(model.lam, rows, model.doc_topic_prior)
    return gamma / gamma.sum(axis=1, keepdims=True)


def infer(model: TopicModel, tokens: Sequence[str]) -> np.ndarray:
    """Normalized topic distribution for one document.

    Unseen tokens are ignored; an empty document lands on the uniform
    distribution (symmetric prior).
    """
    return _infer_batch(model, [list(tokens)])[0]


def account_distributions(model: TopicModel,
                          account_docs: Mapping[int, Sequence],
                          ) -> Dict[int, np.ndarray]:
    """Average of per-document normalized distributions per account."""
    out = {}
    for account_id, docs in account_docs.items():
        docs = list(docs)
        if docs:
            out[account_id] = _infer_batch(model, docs).mean(axis=0)
    return out


def log_likelihood(model: TopicModel, docs: Sequence) -> float:
    """Predictive token log likelihood under converged theta_bar."""
    rows = _bow(docs, model.vocabulary)
    theta = _infer_batch(model, docs)
    beta = model.topic_word_distributions()
    total = 0.0
    for d, (ids, cts) in enumerate(rows):
        if len(ids) == 0:
            continue
        word_probs = theta[d] @ beta[:, ids]
        total += float(cts @ np.log(word_probs))
    return total


def perplexity(model: TopicModel, docs: Sequence) -> float:
    docs = list(docs)
    n_tokens = sum(
        1 for doc in docs for t in _tokens(doc) if t in model.vocabulary)
    if not docs or n_tokens == 0:
        raise EmptyCorpus("no scorable tokens")
    return math.exp(-log_likelihood(model, docs) / n_tokens)


def perplexity_by_day(model: TopicModel, day_docs: Mapping,
                      ) -> Dict[object, float]:
    """Per-day perplexity with the frozen model; empty days skipped."""
    out = {}
    for day in sorted(day_docs):
        docs = list(day_docs[day])
        if docs and any(t in model.vocabulary for doc in docs
                        for t in _tokens(doc)):
            out[day] = perplexity(model, docs)
    return out


# ---------------------------------------------------------------------------
# Grid search with expanding-window time splits.

def time_series_splits(n_days: int, n_splits: int = 3,
                       ) -> List[Tuple[List[int], List[int]]]:
    """Expanding-window (train, test) day-index splits.

    Test segments have length n_days // (n_splits + 1); each train
    window is the full prefix before its test segment.
    """
    if n_days < n_splits + 1:
        raise ValueError(
            f"need at least {n_splits + 1} days for {n_splits} splits")
    test_size = n_days // (n_splits + 1)
    first_test = n_days - n_splits * test_size
    splits = []
    for i in range(n_splits):
        start = first_test + i * test_size
        splits.append((list(range(start)),
                       list(range(start, start + test_size))))
    return splits


@dataclass
class GridRow:
    params: Dict[str, object]
    fold_scores: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))

    @property
    def low(self) -> float:
        return min(self.fold_scores)

    @property
    def mid(self) -> float:
        return float(np.median(self.fold_scores))

    @property
    def high(self) -> float:
        return max(self.fold_scores)


@dataclass
class GridSearchResult:
    best_params: Dict[str, object]
    rows: List[GridRow] = field(default_factory=list)


_GRID_KEYS = ("doc_topic_prior", "topic_word_prior", "batch_size",
              "learn_decay", "learning_offset")


def grid_search(day_docs, grid: Mapping[str, Sequence], n_splits: int = 3,
                n_topics: int = 64, min_freq: int = MIN_TOKEN_FREQ,
                passes: int = 1, seed: int = 0) -> GridSearchResult:
    """Expanding-window search maximizing mean held-out log likelihood.

    day_docs: mapping day -> documents (sorted by day) or an already
    day-ordered sequence of per-day document lists.
    """
    if isinstance(day_docs, Mapping):
        days = [list(day_docs[d]) for d in sorted(day_docs)]
    else:
        days = [list(d) for d in day_docs]

    unknown = set(grid) - set(_GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    # itertools.product() over zero axes yields one empty combo; reject that too
    if not grid or any(not list(v) for v in grid.values()):
        raise GridEmpty("no parameter combinations")
    names = sorted(grid)
    combos = [dict(zip(names, values))
              for values in itertools.product(*(grid[n] for n in names))]

    splits = time_series_splits(len(days), n_splits)
    rows = []
    for params in combos:
        scores = []
        for train_idx, test_idx in splits:
            train = [doc for i in train_idx for doc in days[i]]
            test = [doc for i in test_idx for doc in days[i]]
            model = fit_online(train, n_topics=n_topics, min_freq=min_freq,
                               passes=passes, seed=seed, **params)
            scores.append(log_likelihood(model, test))
        rows.append(GridRow(params=params, fold_scores=scores))

    best = max(rows, key=lambda r: r.mean)
    return GridSearchResult(best_params=dict(best.params), rows=rows)


# ---------------------------------------------------------------------------
# Attention and contribution analyses.

@dataclass
class AttentionResult:
    days: List[object]
    matrix: np.ndarray  # n_days x len(topics)
    ratios: np.ndarray  # (n_days - 1) x len(topics)
    topics: List[int]


def attention_matrix(model: TopicModel, day_docs: Mapping,
                     topics: Optional[Sequence[int]] = None,
                     ) -> AttentionResult:
    """Mean inferred distribution per day, plus day-over-day ratios.

    Days with no documents are skipped; ratios[i] compares kept day
    i+1 against kept day i.
    """
    days, rows = [], []
    for day in sorted(day_docs):
        docs = list(day_docs[day])
        if not docs:
            continue
        days.append(day)
        rows.append(_infer_batch(model, docs).mean(axis=0))
    matrix = np.array(rows) if rows else np.empty((0, model.n_topics))
    cols = list(range(model.n_topics)) if topics is None else list(topics)
    matrix = matrix[:, cols] if len(rows) else matrix
    ratios = matrix[1:] / matrix[:-1] if len(rows) > 1 \
        else np.empty((0, len(cols)))
    return AttentionResult(days=days, matrix=matrix, ratios=ratios,
                           topics=cols)


@dataclass
class ContributionResult:
    topic: int
    accounts: List[int]  # descending contribution order
    masses: np.ndarray
    curve: np.ndarray  # cumulative share of total, aligned to accounts
    top: List[Tuple[int, float]]  # first top_n (account, mass) pairs


def contribution_curve(model: TopicModel,
                       account_docs: Mapping[int, Sequence],
                       topic: int, top_n: int = 75) -> ContributionResult:
    """Descending cumulative share of one topic's mass across accounts.

    account_docs values are the account's documents (token lists),
    already restricted to the analysis window by the caller.
    """
    masses = {}
    for account_id, docs in account_docs.items():
        docs = list(docs)
        if docs:
            masses[account_id] = float(
                _infer_batch(model, docs)[:, topic].sum())
    total = sum(masses.values())
    if total <= 0.0:
        raise ZeroTopicMass(f"topic {topic} has zero total mass")
    order = sorted(masses, key=lambda a: (-masses[a], a))
    sorted_masses = np.array([masses[a] for a in order])
    curve = np.cumsum(sorted_masses) / total
    top = [(a, masses[a]) for a in order[:top_n]]
    return ContributionResult(topic=topic, accounts=order,
                              masses=sorted_masses, curve=curve, top=top)


# ---------------------------------------------------------------------------
# Model file and topic report.

_MAGIC = b"SWTOPIC1"


def save_model(model: TopicModel, path) -> None:
    """Header JSON + vocabulary + row-major little-endian f64 lambda."""
    header = {
        "n_topics": model.n_topics,
        "vocab_size": model.vocab_size,
        "doc_topic_prior": model.doc_topic_prior,
        "topic_word_prior": model.topic_word_prior,
        "learn_decay": model.learn_decay,
        "learning_offset": model.learning_offset,
        "batch_size": model.batch_size,
        "documents_seen": model.documents_seen,
        "vocabulary": [tok for tok, _ in
                       sorted(model.vocabulary.items(),
                              key=lambda kv: kv[1])],
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b"\n")
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(model.lam, dtype="<f8").tobytes())


def load_model(path) -> TopicModel:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != _MAGIC:
            raise ValueError("not a topic model file")
        header = json.loads(fh.readline().decode("utf-8"))
        lam = np.frombuffer(
            fh.read(), dtype="<f8").reshape(header["n_topics"],
                                            header["vocab_size"]).copy()
    vocabulary = {tok: i for i, tok in enumerate(header["vocabulary"])}
    return TopicModel(
        n_topics=header["n_topics"], vocabulary=vocabulary, lam=lam,
        doc_topic_prior=header["doc_topic_prior"],
        topic_word_prior=header["topic_word_prior"],
        learn_decay=header["learn_decay"],
        learning_offset=header["learning_offset"],
        batch_size=header["batch_size"],
        documents_seen=header["documents_seen"])


def export_topic_report(model: TopicModel, path, n: int = 20) -> int:
    """One TSV row per topic: index then its top-n terms."""
    terms = model.top_terms(n)
    with open(path, "w", encoding="utf-8") as fh:
        for k, row in enumerate(terms):
            fh.write("\t".join([str(k)] + row) + "\n")
    return len(terms)
