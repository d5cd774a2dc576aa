"""Skip-gram co-occurrence embeddings over hashtag and mention sets.

Two document shapes feed one trainer: the distinct lowercased hashtags of
a tweet, or the accounts a tweet mentions. The context window is always
the whole document, so co-occurrence is order-free set membership and the
skip-gram pair stream enumerates every ordered token pair per document.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .domain import TweetRecord

HASHTAG_PARAMS = {"dimension": 75, "alpha": 0.0275, "negative": 15,
                  "min_count": 5}
MENTION_PARAMS = {"dimension": 128, "alpha": 0.025, "negative": 5,
                  "min_count": 25}
DEFAULT_EPOCHS = 5
NEG_TABLE_SIZE = 1 << 20
NEG_POWER = 0.75
TOP_TAGS_PER_ACCOUNT = 15
PAIRS_RESOURCE = "capital_country_pairs.tsv"

MODES = ("hashtags", "mentions")


class EmptyVocabulary(Exception):
    """No token survives min_count pruning (or no trainable document)."""


class OutOfVocabulary(KeyError):
    def __init__(self, token: str):
        super().__init__(token)
        self.token = token


class FewerThanTwoPairs(Exception):
    """The analogy evaluation needs at least two usable pairs."""


class NoUsableTags(Exception):
    """Affinity needs at least one in-vocabulary tag on each side."""


@dataclass(frozen=True)
class CooccurrenceDoc:
    source_tweet_id: int
    mode: str
    tokens: Tuple[str, ...]


def _normalize(tweet) -> TweetRecord:
    if isinstance(tweet, TweetRecord):
        return tweet
    return TweetRecord.from_doc(dict(tweet))


def build_docs(tweets: Iterable, mode: str) -> List[CooccurrenceDoc]:
    """Project tweets onto co-occurrence documents for one mode.

    hashtags: the tweet's distinct lowercased tags, non-ASCII tags dropped
    per token. mentions: the mentioned account ids minus the author, as
    strings. Either way a document keeps first-seen order and is dropped
    when fewer than two usable tokens remain.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode!r}")
    docs = []
    for tweet in tweets:
        record = _normalize(tweet)
        if mode == "hashtags":
            distinct = dict.fromkeys(h.lower() for h in record.hashtags)
            tokens = tuple(h for h in distinct if h.isascii())
        else:
            mentioned = dict.fromkeys(int(m) for m in record.mentions
                                      if int(m) != record.author_id)
            tokens = tuple(str(m) for m in mentioned)
        if len(tokens) < 2:
            continue
        docs.append(CooccurrenceDoc(record.id, mode, tokens))
    return docs


@dataclass
class EmbeddingModel:
    mode: str
    dimension: int
    tokens: Tuple[str, ...]
    vocabulary: dict
    frequencies: dict
    syn0: np.ndarray
    syn1: np.ndarray
    alpha: float
    negative: int
    min_count: int
    _unit: Optional[np.ndarray] = field(default=None, repr=False,
                                        compare=False)

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.syn0[self.vocabulary[token]]
        except KeyError:
            raise OutOfVocabulary(token) from None

    def unit_vectors(self) -> np.ndarray:
        if self._unit is None:
            norms = np.linalg.norm(self.syn0, axis=1)
            norms[norms == 0.0] = 1.0
            self._unit = self.syn0 / norms[:, None]
        return self._unit

    def cosine(self, a: str, b: str) -> float:
        unit = self.unit_vectors()
        return float(unit[self.vocabulary[a]] @ unit[self.vocabulary[b]])


def _negative_table(freq: np.ndarray, table_size: int) -> np.ndarray:
    # word2vec's unigram^0.75 table: row i fills a share of slots
    # proportional to freq[i] ** 0.75
    weights = freq ** NEG_POWER
    cumulative = np.cumsum(weights / weights.sum())
    slots = (np.arange(table_size) + 0.5) / table_size
    table = np.searchsorted(cumulative, slots)
    return np.minimum(table, len(freq) - 1).astype(np.int64)


def train(docs: Sequence[CooccurrenceDoc], dimension: int = 100,
          alpha: float = 0.025, negative: int = 5, min_count: int = 5,
          epochs: int = DEFAULT_EPOCHS, seed: int = 0,
          table_size: int = NEG_TABLE_SIZE) -> EmbeddingModel:
    """Train skip-gram/negative-sampling vectors over the documents.

    Deterministic under (corpus, params, seed): document order is shuffled
    per epoch from a seeded generator and the negative sampler is the
    kernel's own linear-congruential stream.
    """
    docs = list(docs)
    counts: Counter = Counter()
    for doc in docs:
        counts.update(doc.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    if not kept:
        raise EmptyVocabulary(f"no token reaches min_count={min_count}")
    vocabulary = {token: i for i, token in enumerate(kept)}

    rows = []
    for doc in docs:
        ids = [vocabulary[t] for t in doc.tokens if t in vocabulary]
        if len(ids) >= 2:
            rows.append(np.asarray(ids, dtype=np.int32))
    if not rows:
        raise EmptyVocabulary("no document keeps two in-vocabulary tokens")

    freq = np.array([counts[t] for t in kept], dtype=np.float64)
    neg_table = _negative_table(freq, table_size)
    rng = np.random.default_rng(seed)
    syn0 = (rng.random((len(kept), dimension)) - 0.5) / dimension
    syn1 = np.zeros((len(kept), dimension))

    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    total_words = int(lengths.sum()) * max(1, epochs)
    words_done = 0
    state = kernels.rng_state_from_seed(seed)
    order = np.arange(len(rows))
    for _ in range(max(1, epochs)):
        rng.shuffle(order)
        flat = np.concatenate([rows[i] for i in order])
        offsets = np.concatenate(
            ([0], np.cumsum(lengths[order]))).astype(np.int64)
        words_done, state = kernels.sgns_train_epoch(
            flat, offsets, syn0, syn1, neg_table, float(alpha),
            float(alpha) * 1e-4, int(negative), words_done, total_words,
            state)

    mode = docs[0].mode if docs else "hashtags"
    return EmbeddingModel(
        mode=mode, dimension=dimension, tokens=tuple(kept),
        vocabulary=vocabulary,
        frequencies={t: int(counts[t]) for t in kept},
        syn0=syn0, syn1=syn1, alpha=alpha, negative=negative,
        min_count=min_count)


def train_hashtags(docs, epochs: int = DEFAULT_EPOCHS,
                   seed: int = 0) -> EmbeddingModel:
    return train(docs, epochs=epochs, seed=seed, **HASHTAG_PARAMS)


def train_mentions(docs, epochs: int = DEFAULT_EPOCHS,
                   seed: int = 0) -> EmbeddingModel:
    return train(docs, epochs=epochs, seed=seed, **MENTION_PARAMS)


def analogy(model: EmbeddingModel, a: str, b: str, c: str) -> str:
    """Nearest token to vec(b) - vec(a) + vec(c), never one of the inputs."""
    for token in (a, b, c):
        if token not in model.vocabulary:
            raise OutOfVocabulary(token)
    target = model.vector(b) - model.vector(a) + model.vector(c)
    norm = np.linalg.norm(target)
    if norm > 0.0:
        target = target / norm
    scores = model.unit_vectors() @ target
    for token in (a, b, c):
        scores[model.vocabulary[token]] = -np.inf
    return model.tokens[int(np.argmax(scores))]


@dataclass(frozen=True)
class PrecisionResult:
    score: float
    queries: int
    correct: int
    pairs_used: Tuple[Tuple[str, str], ...]
    pairs_dropped: Tuple[Tuple[str, str], ...]


def precision_at_1(model: EmbeddingModel,
                   pairs: Sequence[Tuple[str, str]]) -> PrecisionResult:
    """Evaluate capital:country analogies, one query per unordered pair of
    usable pairs, directed first -> second in file order.

    Self-pairs and pairs touching out-of-vocabulary tokens are dropped and
    reported, not scored.
    """
    usable, dropped = [], []
    for capital, country in pairs:
        if (capital == country or capital not in model.vocabulary
                or country not in model.vocabulary):
            dropped.append((capital, country))
        else:
            usable.append((capital, country))
    if len(usable) < 2:
        raise FewerThanTwoPairs(f"{len(usable)} usable pair(s)")
    queries = 0
    correct = 0
    for i in range(len(usable)):
        a1, b1 = usable[i]
        for j in range(i + 1, len(usable)):
            a2, b2 = usable[j]
            queries += 1
            if analogy(model, a1, b1, a2) == b2:
                correct += 1
    return PrecisionResult(score=correct / queries, queries=queries,
                           correct=correct, pairs_used=tuple(usable),
                           pairs_dropped=tuple(dropped))


def load_analogy_pairs(path=None) -> List[Tuple[str, str]]:
    """Read tab-separated capital/country rows, verbatim (no validation:
    the evaluator drops malformed rows itself)."""
    if path is None:
        source = resources.files("spherewatch.data") / PAIRS_RESOURCE
        text = source.read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        capital, country = line.split("\t")
        pairs.append((capital, country))
    return pairs


def top_tags_for_account(tweets: Iterable, account_id: int,
                         n: int = TOP_TAGS_PER_ACCOUNT) -> List[str]:
    """The account's n most used distinct lowercased hashtags."""
    counts: Counter = Counter()
    for tweet in tweets:
        record = _normalize(tweet)
        if record.author_id != account_id:
            continue
        counts.update(h.lower() for h in record.hashtags)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return ranked[:n]


def tag_affinity(model: EmbeddingModel, account_tags: Sequence[str],
                 group_tags: Sequence[str]) -> float:
    """Mean cosine over (account top tags x group tags), vocabulary side.

    The account list is truncated to its first TOP_TAGS_PER_ACCOUNT entries
    before the vocabulary filter; out-of-vocabulary tags drop out of the
    cross product on both sides.
    """
    account = [t for t in
               list(dict.fromkeys(account_tags))[:TOP_TAGS_PER_ACCOUNT]
               if t in model.vocabulary]
    group = [t for t in dict.fromkeys(group_tags) if t in model.vocabulary]
    if not account or not group:
        raise NoUsableTags("need one in-vocabulary tag on each side")
    unit = model.unit_vectors()
    left = unit[[model.vocabulary[t] for t in account]]
    right = unit[[model.vocabulary[t] for t in group]]
    return float(np.mean(left @ right.T))


def save_vectors(model: EmbeddingModel, path) -> int:
    """Write the text vector file: "<vocab_size> <dimension>" header, then
    one "token v1 ... vd" line per token. Returns the token count."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{model.vocab_size} {model.dimension}\n")
        for token in model.tokens:
            row = model.syn0[model.vocabulary[token]]
            handle.write(token + " "
                         + " ".join(format(v, ".17g") for v in row) + "\n")
    return model.vocab_size


def load_vectors(path, mode: str = "hashtags") -> EmbeddingModel:
    """Read a text vector file back into a query-only model (zero output
    table, no frequency data)."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ValueError("malformed vector file header")
        vocab_size, dimension = int(header[0]), int(header[1])
        tokens = []
        vectors = np.empty((vocab_size, dimension))
        for i in range(vocab_size):
            parts = handle.readline().rstrip("\n").split(" ")
            if len(parts) != dimension + 1:
                raise ValueError(f"malformed vector line {i + 2}")
            tokens.append(parts[0])
            vectors[i] = [float(p) for p in parts[1:]]
    vocabulary = {token: i for i, token in enumerate(tokens)}
    return EmbeddingModel(
        mode=mode, dimension=dimension, tokens=tuple(tokens),
        vocabulary=vocabulary, frequencies={}, syn0=vectors,
        syn1=np.zeros_like(vectors), alpha=0.0, negative=0, min_count=0)
