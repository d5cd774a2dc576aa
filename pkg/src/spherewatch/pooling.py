"""Daily document construction for topic modeling.

Three pooling methods run for a day d:
 * conversation: every reply or quote posted on day d, walked upward
   through its ancestor chain; one document per leaf.
 * hashtag: original Portuguese tweets posted on day d, grouped per
   hashtag; a tweet with h hashtags lands in h documents.
 * tweet: the originals from the hashtag step that carried no hashtags,
   one document each.

A retweet's text is a verbatim copy of the referenced tweet and never
counts as original content: retweets are excluded from hashtag and
tweet pooling and contribute no text to conversation chains.

source_tweet_ids records the tweets whose full_text was pooled into
the document; documents whose combined cleaned text is empty are
dropped.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Dict, Iterable, List, Mapping, Sequence, Union

from .domain import TweetKind, TweetRecord
from .textprep import clean_text

__all__ = [
    "PooledDocument", "clean_text", "trace_conversation", "pool_day",
    "pool_period", "export_corpus",
]

TweetLike = Union[TweetRecord, dict]


@dataclass(frozen=True)
class PooledDocument:
    day: date
    method: str  # conversation | hashtag | tweet
    key: str  # root tweet id | hashtag | tweet id
    tokens: tuple
    source_tweet_ids: tuple

    def as_line(self) -> str:
        return f"{self.method}\t{self.key}\t{' '.join(self.tokens)}"


def trace_conversation(tweet: TweetRecord, day: date,
                       tweets_by_id: Mapping[int, TweetRecord],
                       ) -> List[TweetRecord]:
    """Ancestor chain for a day-d reply or quote, leaf first.

    The walk stops at the root, at a parent missing from the store, or
    at the first parent older than d - 2 (that parent is excluded).
    """
    cutoff = day - timedelta(days=2)
    chain = [tweet]
    seen = {tweet.id}
    current = tweet
    while current.referenced_tweet_id is not None:
        parent = tweets_by_id.get(current.referenced_tweet_id)
        # seen guard: malformed reference cycles must not hang the walk
        if parent is None or parent.id in seen:
            break
        if parent.created_at.date() < cutoff:
            break
        chain.append(parent)
        seen.add(parent.id)
        current = parent
    return chain


def _normalize(tweets: Iterable[TweetLike]) -> List[TweetRecord]:
    return [t if isinstance(t, TweetRecord) else TweetRecord.from_doc(t)
            for t in tweets]


def _pool_one(day: date, records: Sequence[TweetRecord],
              by_id: Mapping[int, TweetRecord]) -> List[PooledDocument]:
    day_tweets = sorted((t for t in records if t.created_at.date() == day),
                        key=lambda t: t.id)
    docs: List[PooledDocument] = []

    for leaf in day_tweets:
        if leaf.kind not in (TweetKind.REPLY, TweetKind.QUOTE):
            continue
        chain = trace_conversation(leaf, day, by_id)
        tokens: List[str] = []
        sources: List[int] = []
        for member in chain:
            if member.kind is TweetKind.RETWEET:
                continue
            tokens.extend(clean_text(member.full_text))
            sources.append(member.id)
        if tokens:
            docs.append(PooledDocument(day, "conversation",
                                       str(chain[-1].id),
                                       tuple(tokens), tuple(sources)))

    eligible = [t for t in day_tweets
                if t.kind is TweetKind.ORIGINAL and t.lang == "pt"]
    tagged: Dict[str, List[TweetRecord]] = defaultdict(list)
    untagged: List[TweetRecord] = []
    for t in eligible:
        if t.hashtags:
            # distinct tags only: "#a ... #a" is one membership
            for tag in dict.fromkeys(h.lower() for h in t.hashtags):
                tagged[tag].append(t)
        else:
            untagged.append(t)
    for tag in sorted(tagged):
        members = tagged[tag]
        tokens = []
        for t in members:
            tokens.extend(clean_text(t.full_text))
        if tokens:
            docs.append(PooledDocument(day, "hashtag", tag, tuple(tokens),
                                       tuple(t.id for t in members)))
    for t in untagged:
        toks = clean_text(t.full_text)
        if toks:
            docs.append(PooledDocument(day, "tweet", str(t.id),
                                       tuple(toks), (t.id,)))
    return docs


def pool_day(day: date, tweets: Iterable[TweetLike]) -> List[PooledDocument]:
    """Pooled documents for one day.

    tweets is the full store view (dicts or TweetRecords); earlier days
    must be present for conversation tracing to reach ancestors.
    """
    records = _normalize(tweets)
    by_id = {t.id: t for t in records}
    return _pool_one(day, records, by_id)


def pool_period(tweets: Iterable[TweetLike], start: date,
                end: date) -> Dict[date, List[PooledDocument]]:
    """pool_day for every day in [start, end] over one shared index."""
    records = _normalize(tweets)
    by_id = {t.id: t for t in records}
    out: Dict[date, List[PooledDocument]] = {}
    day = start
    while day <= end:
        out[day] = _pool_one(day, records, by_id)
        day += timedelta(days=1)
    return out


def export_corpus(docs: Sequence[PooledDocument], path) -> int:
    """Write one corpus file: method<TAB>key<TAB>space-joined tokens."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(doc.as_line() + "\n")
    return len(docs)
