"""Mock platform API over a generated world.

Serves the six v1.1-shaped endpoints (followers/ids, friends/ids,
users/lookup, statuses/user_timeline, favorites/list, search/tweets) plus
three control endpoints:

- POST /__sim/clock      {"now": iso} - move virtual time forward
- GET  /__sim/ground_truth - the world's oracle export
- GET  /__sim/requests   - append-only request log for budget assertions

Contract notes (this module is the platform contract the wire client is
written against):
- error bodies are {"errors": [{"code": N, "message": ...}]} with
  63 = suspended, 50 = not found, 326 = protected, 88 = rate limited;
- budgets are enforced per (credential, endpoint family, 15-minute window
  of virtual time); every request to a family consumes quota, and
  exceeding it yields HTTP 429 with x-rate-limit-reset set;
- followers/friends cursors are plain offsets (opaque to clients);
- users/lookup with a single id reports that id's error body (suspended or
  not found) instead of an empty list, so callers can classify missing ids;
- timelines serve only the newest 3,200 posts, and nothing newer than the
  virtual clock.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .domain import format_wire_timestamp, iso, parse_timestamp
from .scheduler import ClockBackwards
from .simworld import SimTweet, World

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
WINDOW_SECONDS = 900

DEFAULT_BUDGETS = {
    "followers": 15,
    "friends": 15,
    "lookup": 300,
    "timeline": 900,
    "favorites": 75,
    "search": 180,
}

_FAMILIES = {
    "/1.1/followers/ids.json": "followers",
    "/1.1/friends/ids.json": "friends",
    "/1.1/users/lookup.json": "lookup",
    "/1.1/statuses/user_timeline.json": "timeline",
    "/1.1/favorites/list.json": "favorites",
    "/1.1/search/tweets.json": "search",
}


class BindError(OSError):
    """The requested address could not be bound."""


class _ApiError(Exception):
    def __init__(self, status: int, code: int, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


def _suspended(account_id) -> _ApiError:
    return _ApiError(403, 63, f"User {account_id} has been suspended.")


def _not_found() -> _ApiError:
    return _ApiError(404, 50, "User not found.")


def _protected(account_id) -> _ApiError:
    return _ApiError(401, 326,
                     f"User {account_id} is protected; not authorized.")


class SimService:
    """Threaded HTTP service over an immutable world."""

    def __init__(self, world: World, host: str = "127.0.0.1", port: int = 0,
                 budgets: Optional[dict] = None):
        self.world = world
        self.host = host
        self.port = port
        self.budgets = dict(DEFAULT_BUDGETS if budgets is None else budgets)
        self._lock = threading.Lock()
        self._now = world.t0
        self._spent: dict[tuple, int] = {}
        self.requests: list[dict] = []
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        self._ground_truth_body = json.dumps(world.ground_truth()).encode()
        self._names = {acc.screen_name.lower(): acc.id
                       for acc in world.accounts.values()}

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "SimService":
        handler = _make_handler(self)
        try:
            self._server = ThreadingHTTPServer((self.host, self.port),
                                               handler)
        except OSError as exc:
            raise BindError(str(exc)) from exc
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True, name="simserver")
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._thread.join(timeout=10)
            self._server = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    # -- virtual time and budgets ---------------------------------------------

    @property
    def now(self) -> datetime:
        with self._lock:
            return self._now

    def set_clock(self, at: datetime) -> datetime:
        with self._lock:
            if at < self._now:
                raise ClockBackwards(f"cannot rewind {self._now} -> {at}")
            self._now = at
            return self._now

    def clock_listener(self):
        """For wiring into a scheduler VirtualClock in the same process."""
        return self.set_clock

    def _window(self, now: datetime) -> int:
        return int((now - _EPOCH).total_seconds()) // WINDOW_SECONDS

    def _charge(self, family: str, credential: str, path: str) -> tuple:
        """Consume one unit; returns (allowed, headers, now)."""
        with self._lock:
            now = self._now
            window = self._window(now)
            budget = self.budgets[family]
            key = (credential, family, window)
            spent = self._spent.get(key, 0)
            allowed = spent < budget
            if allowed:
                self._spent[key] = spent + 1
            self.requests.append({
                "seq": len(self.requests),
                "sim_time": iso(now),
                "endpoint": family,
                "path": path,
                "credential": credential,
                "window": window,
                "status": 200 if allowed else 429,
            })
            headers = {
                "x-rate-limit-limit": str(budget),
                "x-rate-limit-remaining": str(max(0, budget - spent - 1)),
                "x-rate-limit-reset": str((window + 1) * WINDOW_SECONDS),
            }
            return allowed, headers, now

    def _fix_status(self, status: int) -> None:
        with self._lock:
            if self.requests:
                self.requests[-1]["status"] = status

    # -- wire shapes -----------------------------------------------------------

    def user_json(self, account_id: int) -> dict:
        acc = self.world.accounts[account_id]
        return {
            "id": acc.id,
            "id_str": str(acc.id),
            "screen_name": acc.screen_name,
            "name": acc.name,
            "description": acc.description,
            "location": acc.location,
            "url": acc.url,
            "protected": acc.protected,
            "verified": acc.verified,
            "followers_count": acc.followers_count,
            "friends_count": acc.friends_count,
            "statuses_count": acc.statuses_count,
            "favourites_count": acc.favourites_count,
            "created_at": format_wire_timestamp(acc.created_at),
            "default_profile": True,
        }

    def tweet_json(self, tweet: SimTweet, embed: bool = True) -> dict:
        world = self.world
        doc = {
            "id": tweet.id,
            "id_str": str(tweet.id),
            "created_at": format_wire_timestamp(tweet.created_at),
            "full_text": tweet.text,
            "truncated": False,
            "lang": tweet.lang,
            "user": {
                "id": tweet.author_id,
                "id_str": str(tweet.author_id),
                "screen_name": world.accounts[tweet.author_id].screen_name,
            },
            "entities": {
                "hashtags": [{"text": tag} for tag in tweet.hashtags],
                "user_mentions": [
                    {"id": m, "id_str": str(m),
                     "screen_name": world.accounts[m].screen_name}
                    for m in tweet.mentions],
                "urls": [{"expanded_url": u} for u in tweet.urls],
                "symbols": [],
            },
            "favorite_count": 0,
            "retweet_count": 0,
            "in_reply_to_status_id": None,
            "in_reply_to_user_id": None,
            "is_quote_status": False,
        }
        reference = world.tweets.get(tweet.ref_tweet_id) \
            if tweet.ref_tweet_id else None
        if tweet.kind == "reply":
            doc["in_reply_to_status_id"] = tweet.ref_tweet_id
            doc["in_reply_to_user_id"] = tweet.ref_author_id
        elif tweet.kind == "retweet" and reference is not None and embed:
            doc["retweeted_status"] = self.tweet_json(reference, embed=False)
        elif tweet.kind == "quote":
            doc["is_quote_status"] = True
            doc["quoted_status_id"] = tweet.ref_tweet_id
            if reference is not None and embed:
                doc["quoted_status"] = self.tweet_json(reference,
                                                       embed=False)
        return doc

    # -- endpoint logic ---------------------------------------------------------

    def _account_or_error(self, account_id: int, now: datetime):
        account = self.world.accounts.get(account_id)
        if account is None:
            raise _not_found()
        if self.world.is_suspended(account_id, now):
            raise _suspended(account_id)
        return account

    def handle_relation(self, family: str, params: dict,
                        now: datetime) -> dict:
        account_id = _int_param(params, "user_id", required=True)
        account = self._account_or_error(account_id, now)
        if account.protected:
            raise _protected(account_id)
        edges = self.world.followers_of[account_id] if family == "followers" \
            else self.world.friends_of[account_id]
        cursor = _int_param(params, "cursor", default=-1)
        count = min(_int_param(params, "count", default=5000), 5000)
        offset = cursor if cursor > 0 else 0
        page = edges[offset:offset + count]
        next_cursor = offset + count if offset + count < len(edges) else 0
        return {
            "ids": page,
            "next_cursor": next_cursor,
            "next_cursor_str": str(next_cursor),
            "previous_cursor": 0,
            "previous_cursor_str": "0",
        }

    def handle_lookup(self, params: dict, now: datetime):
        raw_ids = params.get("user_id", [""])[0]
        raw_names = params.get("screen_name", [""])[0]
        ids = [int(x) for x in raw_ids.split(",") if x.strip()]
        names = [x.strip() for x in raw_names.split(",") if x.strip()]
        if len(ids) + len(names) > 100:
            raise _ApiError(400, 18, "Too many terms specified in request.")
        if not ids and not names:
            raise _ApiError(400, 44, "user_id or screen_name required.")
        requested = list(ids)
        for name in names:
            requested.append(self._names.get(name.lower(), -1))
        found = []
        for account_id in requested:
            account = self.world.accounts.get(account_id)
            if account is None or self.world.is_suspended(account_id, now):
                continue
            found.append(self.user_json(account_id))
        if not found and len(requested) == 1:
            account_id = requested[0]
            if account_id not in self.world.accounts:
                raise _not_found()
            raise _suspended(account_id)
        return found

    def handle_timeline(self, params: dict, now: datetime):
        account_id = _int_param(params, "user_id", required=True)
        account = self._account_or_error(account_id, now)
        if account.protected:
            raise _protected(account_id)
        count = min(_int_param(params, "count", default=200), 200)
        since_id = _int_param(params, "since_id", default=0)
        max_id = _int_param(params, "max_id", default=None)
        reachable = self.world.reachable_timeline(account_id, now)
        page = [i for i in reachable
                if i > since_id and (max_id is None or i <= max_id)][:count]
        return [self.tweet_json(self.world.tweets[i]) for i in page]

    def handle_favorites(self, params: dict, now: datetime):
        account_id = _int_param(params, "user_id", required=True)
        account = self._account_or_error(account_id, now)
        if account.protected:
            raise _protected(account_id)
        count = min(_int_param(params, "count", default=200), 200)
        since_id = _int_param(params, "since_id", default=0)
        max_id = _int_param(params, "max_id", default=None)
        liked = self.world.visible_favorites(account_id, now)
        page = [i for i in liked
                if i > since_id and (max_id is None or i <= max_id)][:count]
        return [self.tweet_json(self.world.tweets[i]) for i in page]

    def handle_search(self, params: dict, now: datetime):
        query = params.get("q", [""])[0]
        if not query:
            raise _ApiError(400, 25, "Query parameters are missing.")
        tag = urllib.parse.unquote(query).lstrip("#").strip().lower()
        lang = params.get("lang", [None])[0]
        count = min(_int_param(params, "count", default=100), 100)
        since_id = _int_param(params, "since_id", default=0)
        max_id = _int_param(params, "max_id", default=None)
        matches = self.world.search_hashtag(tag, lang, now)
        filtered = [i for i in matches
                    if i > since_id and (max_id is None or i <= max_id)]
        page = filtered[:count]
        metadata = {"count": count, "completed_in": 0.01,
                    "query": urllib.parse.quote(f"#{tag}")}
        if page:
            metadata["max_id"] = page[0]
        if len(page) == count and len(filtered) > count:
            metadata["next_results"] = (
                f"?max_id={page[-1] - 1}&q=%23{tag}&count={count}")
        return {"statuses": [self.tweet_json(self.world.tweets[i])
                             for i in page],
                "search_metadata": metadata}


def _int_param(params: dict, name: str, default=None, required=False):
    raw = params.get(name, [None])[0]
    if raw is None or raw == "":
        if required:
            raise _ApiError(400, 44, f"{name} parameter is missing.")
        return default
    try:
        return int(raw)
    except ValueError:
        raise _ApiError(400, 44, f"{name} parameter is invalid.") from None


def _make_handler(service: SimService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # buffered single-segment responses; Nagle off. Without these the
        # delayed-ACK dance costs ~40ms per localhost request.
        wbufsize = 1 << 16
        disable_nagle_algorithm = True

        def log_message(self, *args):  # silence default stderr chatter
            pass

        def _reply(self, status: int, payload, headers=None) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type",
                             "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            for name, value in (headers or {}).items():
                self.send_header(name, value)
            self.end_headers()
            self.wfile.write(body)

        def _error_body(self, status: int, code: int, message: str,
                        headers=None) -> None:
            self._reply(status, {"errors": [{"code": code,
                                             "message": message}]}, headers)

        def _credential(self) -> str:
            return self.headers.get("Authorization", "anon")

        def do_GET(self):
            parsed = urllib.parse.urlparse(self.path)
            params = urllib.parse.parse_qs(parsed.query)
            path = parsed.path
            if path == "/__sim/ground_truth":
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header(
                    "Content-Length", str(len(service._ground_truth_body)))
                self.end_headers()
                self.wfile.write(service._ground_truth_body)
                return
            if path == "/__sim/requests":
                with service._lock:
                    payload = {"requests": list(service.requests)}
                self._reply(200, payload)
                return
            family = _FAMILIES.get(path)
            if family is None:
                self._error_body(404, 34, "Sorry, that page does not exist.")
                return
            allowed, headers, now = service._charge(
                family, self._credential(), path)
            if not allowed:
                self._error_body(429, 88, "Rate limit exceeded.", headers)
                return
            try:
                if family in ("followers", "friends"):
                    payload = service.handle_relation(family, params, now)
                elif family == "lookup":
                    payload = service.handle_lookup(params, now)
                elif family == "timeline":
                    payload = service.handle_timeline(params, now)
                elif family == "favorites":
                    payload = service.handle_favorites(params, now)
                else:
                    payload = service.handle_search(params, now)
            except _ApiError as exc:
                service._fix_status(exc.status)
                self._error_body(exc.status, exc.code, exc.message, headers)
                return
            self._reply(200, payload, headers)

        def do_POST(self):
            parsed = urllib.parse.urlparse(self.path)
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length).decode("utf-8") if length else ""
            if parsed.path == "/__sim/clock":
                try:
                    payload = json.loads(raw or "{}")
                    at = parse_timestamp(payload["now"])
                except (ValueError, KeyError) as exc:
                    self._reply(400, {"error": f"bad payload: {exc}"})
                    return
                try:
                    now = service.set_clock(at)
                except ClockBackwards as exc:
                    self._reply(400, {"error": "ClockBackwards",
                                      "detail": str(exc)})
                    return
                self._reply(200, {"now": iso(now)})
                return
            if parsed.path == "/1.1/users/lookup.json":
                params = urllib.parse.parse_qs(raw)
                for key, values in urllib.parse.parse_qs(
                        parsed.query).items():
                    params.setdefault(key, values)
                allowed, headers, now = service._charge(
                    "lookup", self._credential(), parsed.path)
                if not allowed:
                    self._error_body(429, 88, "Rate limit exceeded.",
                                     headers)
                    return
                try:
                    payload = service.handle_lookup(params, now)
                except _ApiError as exc:
                    service._fix_status(exc.status)
                    self._error_body(exc.status, exc.code, exc.message,
                                     headers)
                    return
                self._reply(200, payload, headers)
                return
            self._error_body(404, 34, "Sorry, that page does not exist.")

    return Handler
