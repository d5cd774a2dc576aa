"""Dataset activity statistics.

Daily tweet counts by kind over a contiguous date range, weekday
aggregates, and the pairwise Welch t-test matrix over weekday totals.
Days are attributed by the UTC date of created_at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import stdtr

from .domain import TweetKind, TweetRecord

KINDS = ("original", "retweet", "reply", "quote")
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday",
            "saturday", "sunday")
ALPHA = 0.05


class RangeTooShort(Exception):
    """Weekday statistics need at least one full week of days."""


class DegenerateVariance(Exception):
    """Marker type for the zero-variance conventions (never raised by
    welch_matrix itself; the conventions resolve to p=1 or p=0)."""


@dataclass(frozen=True)
class DayCounts:
    day: date
    original: int = 0
    retweet: int = 0
    reply: int = 0
    quote: int = 0

    @property
    def total(self) -> int:
        return self.original + self.retweet + self.reply + self.quote


def _normalize(tweet) -> TweetRecord:
    if isinstance(tweet, TweetRecord):
        return tweet
    return TweetRecord.from_doc(dict(tweet))


def daily_series(tweets: Iterable, start: date, end: date) -> List[DayCounts]:
    """Per-day per-kind counts over [start, end], absent days explicit."""
    if end < start:
        raise ValueError("end before start")
    counts: Dict[date, Dict[str, int]] = {}
    for tweet in tweets:
        record = _normalize(tweet)
        day = record.created_at.date()
        if day < start or day > end:
            continue
        slot = counts.setdefault(day, dict.fromkeys(KINDS, 0))
        slot[record.kind.value] += 1
    series = []
    day = start
    while day <= end:
        slot = counts.get(day, {})
        series.append(DayCounts(day=day, **{k: slot.get(k, 0)
                                            for k in KINDS}))
        day += timedelta(days=1)
    return series


@dataclass(frozen=True)
class WeekdayStats:
    weekday: str
    n: int
    mean: float
    q1: float
    median: float
    q3: float


def weekday_groups(series: Sequence[DayCounts]) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = {name: [] for name in WEEKDAYS}
    for row in series:
        groups[WEEKDAYS[row.day.weekday()]].append(row.total)
    return groups


def weekday_stats(series: Sequence[DayCounts]) -> List[WeekdayStats]:
    """Mean and box-plot quartiles of daily totals per weekday."""
    if len(series) < 7:
        raise RangeTooShort(f"{len(series)} day(s), need 7")
    groups = weekday_groups(series)
    stats = []
    for name in WEEKDAYS:
        values = np.asarray(groups[name], dtype=float)
        q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
        stats.append(WeekdayStats(weekday=name, n=len(values),
                                  mean=float(values.mean()), q1=float(q1),
                                  median=float(median), q3=float(q3)))
    return stats


def welch_test(a: Sequence[float], b: Sequence[float]
               ) -> Tuple[float, float, float]:
    """Two-sided Welch t-test: (t, df, p).

    Conventions for zero-variance pairs: equal means give p=1, unequal
    means give p=0 (t is +/-inf, df collapses to 0).
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("each group needs n >= 2")
    vx = x.var(ddof=1)
    vy = y.var(ddof=1)
    mx = x.mean()
    my = y.mean()
    sx = vx / len(x)
    sy = vy / len(y)
    if sx + sy == 0.0:
        if mx == my:
            return 0.0, 0.0, 1.0
        return math.copysign(math.inf, mx - my), 0.0, 0.0
    t = (mx - my) / math.sqrt(sx + sy)
    df = (sx + sy) ** 2 / (
        sx ** 2 / (len(x) - 1) + sy ** 2 / (len(y) - 1))
    p = 2.0 * stdtr(df, -abs(t))
    return float(t), float(df), float(p)


@dataclass(frozen=True)
class WelchMatrix:
    weekdays: Tuple[str, ...]
    t: np.ndarray
    df: np.ndarray
    p: np.ndarray

    def mask(self, alpha: float = ALPHA) -> np.ndarray:
        """1 where the pair differs at the given level; diagonal 0."""
        out = (self.p < alpha).astype(int)
        np.fill_diagonal(out, 0)
        return out


def welch_matrix(groups: Mapping[str, Sequence[float]]) -> WelchMatrix:
    """Pairwise Welch tests over weekday groups (or any named groups)."""
    names = tuple(groups)
    k = len(names)
    t = np.zeros((k, k))
    df = np.zeros((k, k))
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            tij, dfij, pij = welch_test(groups[names[i]], groups[names[j]])
            t[i, j], t[j, i] = tij, -tij
            df[i, j] = df[j, i] = dfij
            p[i, j] = p[j, i] = pij
    return WelchMatrix(weekdays=names, t=t, df=df, p=p)


def export_daily_series(series: Sequence[DayCounts], path) -> int:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("date,original,retweet,reply,quote,total\n")
        for row in series:
            handle.write(f"{row.day.isoformat()},{row.original},"
                         f"{row.retweet},{row.reply},{row.quote},"
                         f"{row.total}\n")
    return len(series)


def export_weekday_stats(stats: Sequence[WeekdayStats], path) -> int:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("weekday,n,mean,q1,median,q3\n")
        for row in stats:
            handle.write(f"{row.weekday},{row.n},{row.mean:.6f},"
                         f"{row.q1:.6f},{row.median:.6f},{row.q3:.6f}\n")
    return len(stats)


def export_welch_mask(matrix: WelchMatrix, path,
                      alpha: float = ALPHA) -> int:
    mask = matrix.mask(alpha)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("," + ",".join(matrix.weekdays) + "\n")
        for i, name in enumerate(matrix.weekdays):
            cells = ",".join(str(int(v)) for v in mask[i])
            handle.write(f"{name},{cells}\n")
    return len(matrix.weekdays)
