"""HTTP client for the platform API: pagination, rate budgets, error mapping.

One client instance serves many worker threads. Budget state is shared and
reserved under a lock before any wire request goes out, so the request log
on the other side can never show more than the advertised per-window budget
for an endpoint+credential pair. Credentials rotate round-robin per endpoint
family, independently of each other.
"""

import json
import math
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import requests

from .domain import AccountRecord, AccountStatus, TweetRecord, classify_tweet

WINDOW = timedelta(minutes=15)

# advertised per-credential budgets per 15-minute window, by endpoint family
ENDPOINT_BUDGETS = {
    "followers": 15,
    "friends": 15,
    "lookup": 300,
    "timeline": 900,
    "favorites": 75,
    "search": 180,
}

_PATHS = {
    "followers": "/1.1/followers/ids.json",
    "friends": "/1.1/friends/ids.json",
    "lookup": "/1.1/users/lookup.json",
    "timeline": "/1.1/statuses/user_timeline.json",
    "favorites": "/1.1/favorites/list.json",
    "search": "/1.1/search/tweets.json",
}

TIMELINE_CAP = 3200
PAGE_SIZE = 200
SEARCH_PAGE_SIZE = 100
LOOKUP_CHUNK = 100
MAX_RATE_WAITS = 3


class PlatformError(Exception):
    """Base for mapped API errors; account_id set when the error is about
    one account."""

    status = None

    def __init__(self, message: str, account_id: Optional[int] = None):
        super().__init__(message)
        self.account_id = account_id


class Suspended(PlatformError):
    status = AccountStatus.SUSPENDED


class NotFound(PlatformError):
    status = AccountStatus.NOT_FOUND


class Protected(PlatformError):
    status = AccountStatus.PROTECTED


class RateLimited(PlatformError):
    def __init__(self, message: str, reset_at: datetime):
        super().__init__(message)
        self.reset_at = reset_at


class WireError(PlatformError):
    """Transport failure or a response outside the mapped contract."""


@dataclass
class RateLimitState:
    remaining: int
    window_reset_at: datetime
    window_length: timedelta = WINDOW


def load_credentials(path: str) -> list[str]:
    """Bearer tokens from the api_keys file: a JSON list of strings or of
    objects carrying a "bearer" field."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list) or not raw:
        raise ValueError("api_keys file must hold a non-empty JSON list")
    tokens = []
    for entry in raw:
        if isinstance(entry, str):
            tokens.append(entry)
        elif isinstance(entry, dict) and "bearer" in entry:
            tokens.append(str(entry["bearer"]))
        else:
            raise ValueError(f"unusable credential entry: {entry!r}")
    return tokens


def _window_reset(now: datetime) -> datetime:
    epoch = now.timestamp()
    return datetime.fromtimestamp((math.floor(epoch / 900) + 1) * 900,
                                  tz=timezone.utc)


class PlatformClient:
    def __init__(self, base_url: str, credentials: Sequence[str],
                 clock, store=None, budgets: Optional[dict] = None,
                 session: Optional[requests.Session] = None):
        if not credentials:
            raise ValueError("at least one credential required")
        self.base_url = base_url.rstrip("/")
        self._credentials = list(credentials)
        self._clock = clock
        self._store = store
        self._budgets = dict(ENDPOINT_BUDGETS)
        if budgets:
            self._budgets.update(budgets)
        self._session = session or requests.Session()
        self._lock = threading.Lock()
        # (family, credential index) -> RateLimitState
        self._limits: dict[tuple, RateLimitState] = {}
        self._rotation = {family: 0 for family in ENDPOINT_BUDGETS}

    # -- budget bookkeeping --------------------------------------------

    def _state(self, family: str, index: int,
               now: datetime) -> RateLimitState:
        state = self._limits.get((family, index))
        if state is None or now >= state.window_reset_at:
            state = RateLimitState(remaining=self._budgets[family],
                                   window_reset_at=_window_reset(now))
            self._limits[(family, index)] = state
        return state

    def _reserve(self, family: str):
        """Pick a credential with budget left; returns (index, token) or
        (None, earliest reset) when every credential is exhausted."""
        now = self._clock.now()
        with self._lock:
            start = self._rotation[family]
            n = len(self._credentials)
            earliest = None
            for step in range(n):
                index = (start + step) % n
                state = self._state(family, index, now)
                if state.remaining > 0:
                    state.remaining -= 1
                    self._rotation[family] = (index + 1) % n
                    return index, self._credentials[index]
                if earliest is None or state.window_reset_at < earliest:
                    earliest = state.window_reset_at
            return None, earliest

    def _adopt_headers(self, family: str, index: int, resp) -> None:
        remaining = resp.headers.get("x-rate-limit-remaining")
        reset = resp.headers.get("x-rate-limit-reset")
        if remaining is None or reset is None:
            return
        with self._lock:
            state = self._limits.get((family, index))
            if state is None:
                return
            state.remaining = min(state.remaining, int(remaining))
            state.window_reset_at = datetime.fromtimestamp(
                int(reset), tz=timezone.utc)

    def rate_limit_view(self) -> dict:
        with self._lock:
            return {f"{family}:{index}": {
                        "remaining": s.remaining,
                        "reset_at": s.window_reset_at.isoformat()}
                    for (family, index), s in sorted(self._limits.items())}

    # -- single wire call ----------------------------------------------

    def _call(self, family: str, params: dict,
              account_id: Optional[int] = None) -> object:
        waits = 0
        while True:
            index, token_or_reset = self._reserve(family)
            if index is None:
                waits += 1
                if waits > MAX_RATE_WAITS:
                    raise RateLimited(f"{family} budget exhausted",
                                      reset_at=token_or_reset)
                self._clock.sleep_until(token_or_reset)
                continue
            try:
                resp = self._session.get(
                    self.base_url + _PATHS[family],
                    params={k: v for k, v in params.items()
                            if v is not None},
                    headers={"Authorization": f"Bearer {token_or_reset}"},
                    timeout=30)
            except requests.RequestException as exc:
                raise WireError(f"{family} request failed: {exc}") from exc
            self._adopt_headers(family, index, resp)
            if resp.status_code == 200:
                return resp.json()
            code = self._error_code(resp)
            if resp.status_code == 429 or code == 88:
                waits += 1
                reset_at = self._reset_from(resp)
                if waits > MAX_RATE_WAITS:
                    raise RateLimited(f"{family} rate limited",
                                      reset_at=reset_at)
                self._clock.sleep_until(reset_at)
                continue
            if code == 63:
                raise Suspended(f"account {account_id} suspended",
                                account_id)
            if code == 326 or resp.status_code == 401:
                raise Protected(f"account {account_id} protected",
                                account_id)
            if code == 50 or resp.status_code == 404:
                raise NotFound(f"account {account_id} not found",
                               account_id)
            raise WireError(
                f"{family} -> HTTP {resp.status_code} code {code}",
                account_id)

    @staticmethod
    def _error_code(resp) -> Optional[int]:
        try:
            return resp.json()["errors"][0]["code"]
        except Exception:
            return None

    def _reset_from(self, resp) -> datetime:
        reset = resp.headers.get("x-rate-limit-reset")
        if reset is not None:
            return datetime.fromtimestamp(int(reset), tz=timezone.utc)
        return self._clock.now() + WINDOW

    def _mark(self, exc: PlatformError) -> None:
        if self._store is not None and exc.account_id is not None \
                and exc.status is not None:
            self._store.mark_status(exc.account_id, exc.status.value,
                                    self._clock.now())

    # -- guarded wrapper -----------------------------------------------

    def guarded_call(self, fn, *args, **kwargs):
        """Run an endpoint op; sleep through rate limits (bounded), mark
        account-level errors in the store and hand the error object back
        to the caller instead of raising."""
        waits = 0
        while True:
            try:
                return fn(*args, **kwargs)
            except RateLimited as exc:
                waits += 1
                if waits > MAX_RATE_WAITS:
                    raise
                self._clock.sleep_until(exc.reset_at)
            except (Suspended, NotFound, Protected) as exc:
                self._mark(exc)
                return exc

    # -- endpoint operations -------------------------------------------

    def fetch_relation_ids(self, account_id: int, relation: str,
                           page_size: int = 5000) -> list[int]:
        if relation not in ("followers", "friends"):
            raise ValueError(f"unknown relation {relation!r}")
        ids: list[int] = []
        cursor = -1
        while True:
            body = self._call(relation,
                              {"user_id": account_id, "cursor": cursor,
                               "count": page_size},
                              account_id=account_id)
            ids.extend(int(i) for i in body.get("ids", []))
            cursor = int(body.get("next_cursor", 0))
            if cursor == 0:
                return ids

    def lookup_users(self, ids: Iterable[int]):
        """Hydrate accounts in chunks of 100. Returns (records, missing)
        where missing maps absent ids to their AccountStatus; absentees
        are also marked in the store when one is attached."""
        wanted = [int(i) for i in ids]
        records: list[AccountRecord] = []
        missing: dict[int, AccountStatus] = {}
        now = self._clock.now()
        for start in range(0, len(wanted), LOOKUP_CHUNK):
            chunk = wanted[start:start + LOOKUP_CHUNK]
            try:
                body = self._call(
                    "lookup", {"user_id": ",".join(map(str, chunk))})
            except (Suspended, NotFound, Protected):
                # single-term chunks answer with the specific error;
                # classification below resolves each id
                body = []
            found = {int(u["id"]): u for u in body}
            for account_id in chunk:
                raw = found.get(account_id)
                if raw is not None:
                    records.append(AccountRecord.from_api(
                        raw, collected_at=now))
                    continue
                missing[account_id] = self._classify_missing(account_id)
        return records, missing

    def lookup_by_screen_names(self, names: Sequence[str]):
        """Hydrate accounts by screen name in chunks of 100. Returns
        (records, missing_names); names cannot be classified further."""
        wanted = [str(n).lstrip("@") for n in names]
        records: list[AccountRecord] = []
        missing: list[str] = []
        now = self._clock.now()
        for start in range(0, len(wanted), LOOKUP_CHUNK):
            chunk = wanted[start:start + LOOKUP_CHUNK]
            try:
                body = self._call("lookup",
                                  {"screen_name": ",".join(chunk)})
            except (Suspended, NotFound):
                body = []
            found = {u["screen_name"].lower(): u for u in body}
            for name in chunk:
                raw = found.get(name.lower())
                if raw is not None:
                    records.append(AccountRecord.from_api(
                        raw, collected_at=now))
                else:
                    missing.append(name)
        return records, missing

    def _classify_missing(self, account_id: int) -> AccountStatus:
        # single-id lookup answers with the specific error for this id
        try:
            body = self._call("lookup", {"user_id": str(account_id)},
                              account_id=account_id)
        except (Suspended, NotFound, Protected) as exc:
            self._mark(exc)
            return exc.status
        except RateLimited:
            raise
        if body:
            # present after all (race with chunk call); treat as active
            return AccountStatus.ACTIVE
        return AccountStatus.NOT_FOUND

    def fetch_timeline(self, account_id: int, kind: str = "posts",
                       since_id: Optional[int] = None,
                       window: Optional[tuple] = None) -> list[TweetRecord]:
        """Newest-first timeline walk. Stops at the window's old boundary
        (pages come newest first), the 3,200 reachability cap for posts,
        or the end of the stream."""
        if kind not in ("posts", "favorites"):
            raise ValueError(f"unknown timeline kind {kind!r}")
        family = "timeline" if kind == "posts" else "favorites"
        oldest, newest = window if window is not None else (None, None)
        out: list[TweetRecord] = []
        seen: set[int] = set()
        max_id = None
        fetched = 0
        while True:
            body = self._call(family,
                              {"user_id": account_id, "count": PAGE_SIZE,
                               "since_id": since_id, "max_id": max_id,
                               "include_rts": 1, "tweet_mode": "extended"},
                              account_id=account_id)
            if not body:
                return out
            fetched += len(body)
            page_oldest = None
            for raw in body:
                record = classify_tweet(raw)
                if record.id in seen:
                    continue
                seen.add(record.id)
                if page_oldest is None or \
                        record.created_at < page_oldest:
                    page_oldest = record.created_at
                if newest is not None and record.created_at > newest:
                    continue
                if oldest is not None and record.created_at < oldest:
                    continue
                out.append(record)
            max_id = min(int(raw["id"]) for raw in body) - 1
            if kind == "posts" and fetched >= TIMELINE_CAP:
                return out
            if oldest is not None and page_oldest is not None \
                    and page_oldest < oldest:
                # oldest boundary crossed inside this page: done
                return out
            if len(body) < PAGE_SIZE:
                return out

    def search_tweets(self, query: str, languages: Sequence[str] = (),
                      max_results: int = 200) -> list[TweetRecord]:
        """One language-restricted paged search per language (or a single
        unrestricted one), capped at max_results distinct tweets."""
        if not query:
            raise ValueError("query must be non-empty")
        out: list[TweetRecord] = []
        seen: set[int] = set()
        for lang in (languages or [None]):
            max_id = None
            while len(out) < max_results:
                body = self._call("search",
                                  {"q": query, "lang": lang,
                                   "count": SEARCH_PAGE_SIZE,
                                   "max_id": max_id,
                                   "tweet_mode": "extended"})
                statuses = body.get("statuses", [])
                if not statuses:
                    break
                for raw in statuses:
                    record = classify_tweet(raw)
                    if record.id in seen:
                        continue
                    seen.add(record.id)
                    out.append(record)
                    if len(out) >= max_results:
                        break
                max_id = min(int(raw["id"]) for raw in statuses) - 1
                if len(statuses) < SEARCH_PAGE_SIZE:
                    break
        return out
