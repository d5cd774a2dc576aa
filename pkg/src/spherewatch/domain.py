"""Core data types shared by every module: account/tweet records, the
collection configuration contract, task-name parsing, and classification of
raw platform objects.

All types are immutable values after construction and safe to share between
workers. Records convert to/from plain JSON-compatible documents (`to_doc` /
`from_doc`) which is the representation the store keeps.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Optional

# The platform's classic timestamp encoding, e.g. "Sun Aug 1 00:00:00 +0000
# 2019". ISO 8601 is accepted everywhere as the second input encoding.
WIRE_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"


class MalformedConfig(ValueError):
    """Configuration document is not syntactically well-formed."""


class InvalidConfig(ValueError):
    """Configuration violates an invariant; names the offending field."""

    def __init__(self, field_name: str, message: str = ""):
        self.field_name = field_name
        super().__init__(message or field_name)


class MalformedTweet(ValueError):
    """Raw tweet object misses id, author, text, or timestamp."""


class BadTaskName(ValueError):
    """Task filename does not encode a valid phase/offset."""


class WatchState(str, Enum):
    WATCHED = "watched"
    REJECTED = "rejected"
    UNDECIDED = "undecided"


class AccountStatus(str, Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    NOT_FOUND = "not_found"
    PROTECTED = "protected"


class TweetKind(str, Enum):
    ORIGINAL = "original"
    RETWEET = "retweet"
    REPLY = "reply"
    QUOTE = "quote"


def parse_timestamp(value: Any) -> datetime:
    """Parse the wire format or ISO 8601 into an aware UTC datetime."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, str):
        try:
            dt = datetime.strptime(value, WIRE_TIME_FORMAT)
        except ValueError:
            try:
                dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
            except ValueError as exc:
                raise ValueError(f"unparseable timestamp: {value!r}") from exc
    else:
        raise ValueError(f"unparseable timestamp: {value!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_wire_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(WIRE_TIME_FORMAT)


def iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


@dataclass(frozen=True)
class AccountRecord:
    """One platform account with watch/appearance/suspension state."""

    id: int
    screen_name: Optional[str] = None
    created_at: Optional[datetime] = None
    description: Optional[str] = None
    location: Optional[str] = None
    name: Optional[str] = None
    url: Optional[str] = None
    followers_count: int = 0
    friends_count: int = 0
    statuses_count: int = 0
    favourites_count: int = 0
    verified: bool = False
    depth: Optional[int] = None
    collected_at: Optional[datetime] = None
    first_collected_at: Optional[datetime] = None
    watched: WatchState = WatchState.UNDECIDED
    appearances: int = 0
    most_common_language: Optional[str] = None
    last_tweet_id: Optional[int] = None
    status: AccountStatus = AccountStatus.ACTIVE
    status_changed_at: Optional[datetime] = None

    @classmethod
    def from_api(cls, raw: dict, collected_at: Optional[datetime] = None,
                 depth: Optional[int] = None) -> "AccountRecord":
        """Build a record from a raw platform user object.

        Accepts both the wire shape ("id") and stored documents ("_id");
        counters default to 0 when absent.
        """
        account_id = raw.get("id", raw.get("_id"))
        if account_id is None:
            raise MalformedTweet("user object without id")
        return cls(
            id=int(account_id),
            screen_name=raw.get("screen_name"),
            created_at=(parse_timestamp(raw["created_at"])
                        if raw.get("created_at") else None),
            description=raw.get("description"),
            location=raw.get("location"),
            name=raw.get("name"),
            url=raw.get("url"),
            followers_count=int(raw.get("followers_count", 0)),
            friends_count=int(raw.get("friends_count", 0)),
            statuses_count=int(raw.get("statuses_count", 0)),
            favourites_count=int(raw.get("favourites_count", 0)),
            verified=bool(raw.get("verified", False)),
            depth=raw.get("depth", depth),
            collected_at=collected_at,
            first_collected_at=collected_at,
        )

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {"id": self.id}
        for key in ("screen_name", "description", "location", "name", "url"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        for key in ("created_at", "collected_at", "first_collected_at",
                    "status_changed_at"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = iso(value)
        doc["followers_count"] = self.followers_count
        doc["friends_count"] = self.friends_count
        doc["statuses_count"] = self.statuses_count
        doc["favourites_count"] = self.favourites_count
        doc["verified"] = self.verified
        if self.depth is not None:
            doc["depth"] = self.depth
        doc["watched"] = self.watched.value
        doc["appearances"] = self.appearances
        if self.most_common_language is not None:
            doc["most_common_language"] = self.most_common_language
        if self.last_tweet_id is not None:
            doc["last_tweet_id"] = self.last_tweet_id
        doc["status"] = self.status.value
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "AccountRecord":
        def ts(key: str) -> Optional[datetime]:
            return parse_timestamp(doc[key]) if doc.get(key) else None

        return cls(
            id=int(doc["id"]),
            screen_name=doc.get("screen_name"),
            created_at=ts("created_at"),
            description=doc.get("description"),
            location=doc.get("location"),
            name=doc.get("name"),
            url=doc.get("url"),
            followers_count=int(doc.get("followers_count", 0)),
            friends_count=int(doc.get("friends_count", 0)),
            statuses_count=int(doc.get("statuses_count", 0)),
            favourites_count=int(doc.get("favourites_count", 0)),
            verified=bool(doc.get("verified", False)),
            depth=doc.get("depth"),
            collected_at=ts("collected_at"),
            first_collected_at=ts("first_collected_at"),
            watched=WatchState(doc.get("watched", "undecided")),
            appearances=int(doc.get("appearances", 0)),
            most_common_language=doc.get("most_common_language"),
            last_tweet_id=doc.get("last_tweet_id"),
            status=AccountStatus(doc.get("status", "active")),
            status_changed_at=ts("status_changed_at"),
        )


@dataclass(frozen=True)
class TweetRecord:
    """One tweet with kind, reference, extracted entities, processed flag."""

    id: int
    author_id: int
    created_at: datetime
    full_text: str
    lang: str = "und"
    kind: TweetKind = TweetKind.ORIGINAL
    referenced_tweet_id: Optional[int] = None
    referenced_author_id: Optional[int] = None
    mentions: tuple = ()
    hashtags: tuple = ()
    urls: tuple = ()
    processed: bool = False
    favorited_by: tuple = ()

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {
            "id": self.id,
            "author_id": self.author_id,
            "created_at": iso(self.created_at),
            "full_text": self.full_text,
            "lang": self.lang,
            "kind": self.kind.value,
            "mentions": list(self.mentions),
            "hashtags": list(self.hashtags),
            "urls": list(self.urls),
            "processed": self.processed,
        }
        if self.referenced_tweet_id is not None:
            doc["referenced_tweet_id"] = self.referenced_tweet_id
        if self.referenced_author_id is not None:
            doc["referenced_author_id"] = self.referenced_author_id
        if self.favorited_by:
            doc["favorited_by"] = sorted(self.favorited_by)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "TweetRecord":
        return cls(
            id=int(doc["id"]),
            author_id=int(doc["author_id"]),
            created_at=parse_timestamp(doc["created_at"]),
            full_text=doc.get("full_text", ""),
            lang=doc.get("lang", "und"),
            kind=TweetKind(doc.get("kind", "original")),
            referenced_tweet_id=doc.get("referenced_tweet_id"),
            referenced_author_id=doc.get("referenced_author_id"),
            mentions=tuple(doc.get("mentions", ())),
            hashtags=tuple(doc.get("hashtags", ())),
            urls=tuple(doc.get("urls", ())),
            processed=bool(doc.get("processed", False)),
            favorited_by=tuple(doc.get("favorited_by", ())),
        )


def classify_tweet(raw: dict) -> TweetRecord:
    """Classify a raw platform tweet object into a TweetRecord.

    Kind precedence: retweet > quote > reply > original. A quoted reply
    counts as a quote (the quote carries new text plus a reference). Quote
    classification requires the embedded quoted_status object so the
    referenced author is known.
    """
    tweet_id = raw.get("id", raw.get("id_str"))
    user = raw.get("user") or {}
    author_id = user.get("id", raw.get("user_id"))
    created = raw.get("created_at")
    text = raw.get("full_text", raw.get("text"))
    if tweet_id is None or author_id is None or created is None or text is None:
        raise MalformedTweet(
            "tweet object requires id, author, text, and timestamp")

    kind = TweetKind.ORIGINAL
    ref_tweet: Optional[int] = None
    ref_author: Optional[int] = None
    retweeted = raw.get("retweeted_status")
    quoted = raw.get("quoted_status")
    if retweeted:
        kind = TweetKind.RETWEET
        ref_tweet = int(retweeted["id"])
        ref_author = int(retweeted["user"]["id"])
    elif quoted:
        kind = TweetKind.QUOTE
        ref_tweet = int(raw.get("quoted_status_id", quoted["id"]))
        ref_author = int(quoted["user"]["id"])
    elif raw.get("in_reply_to_status_id") is not None:
        kind = TweetKind.REPLY
        ref_tweet = int(raw["in_reply_to_status_id"])
        ref_author = int(raw["in_reply_to_user_id"])

    entities = raw.get("entities") or {}
    mentions = tuple(int(m["id"]) for m in entities.get("user_mentions", ()))
    hashtags = tuple(h["text"].lower() for h in entities.get("hashtags", ()))
    urls = tuple(u["expanded_url"] for u in entities.get("urls", ())
                 if u.get("expanded_url"))

    return TweetRecord(
        id=int(tweet_id),
        author_id=int(author_id),
        created_at=parse_timestamp(created),
        full_text=text,
        lang=raw.get("lang") or "und",
        kind=kind,
        referenced_tweet_id=ref_tweet,
        referenced_author_id=ref_author,
        mentions=mentions,
        hashtags=hashtags,
        urls=urls,
    )


@dataclass(frozen=True)
class CollectionConfig:
    """The configuration contract governing expansion, limits, languages,
    and the collection time window."""

    seed_usernames: tuple
    max_watched_users: int
    max_daily_increase: int
    max_daily_increase_ratio: float
    min_appearances_before_watched: int
    ignore_tweet_media: bool
    oldest_tweet: datetime
    newest_tweet: datetime
    search_languages: tuple
    max_threads: int
    min_tweets_before_restricting_by_language: int
    store_address: str
    database_name: str
    snapshot_enabled: bool
    notifier_webhook: Optional[str]
    database_stats_file: str
    seconds_between_db_stats_log: int
    api_keys_file: str
    extensions: dict = field(default_factory=dict)


_POSITIVE_FIELDS = (
    "max_watched_users", "max_daily_increase",
    "min_appearances_before_watched", "max_threads",
    "min_tweets_before_restricting_by_language",
    "seconds_between_db_stats_log",
)


def _take(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping:
        raise InvalidConfig(path, f"missing required field {path}")
    return mapping.pop(key)


def parse_config(text: str) -> CollectionConfig:
    """Parse and validate the JSON configuration document.

    Unknown fields at any nesting level are preserved in `extensions`
    (forward compatibility: the contract grows with the deployment).
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(str(exc)) from exc
    if not isinstance(data, dict):
        raise MalformedConfig("top-level value must be an object")

    data = json.loads(text)  # private mutable copy
    seed = data.pop("seed", {}) or {}
    collection = data.pop("collection", {}) or {}
    limits = collection.pop("limits", {}) or {}
    storage = data.pop("mongodb", {}) or {}
    notifications = data.pop("notifications", {}) or {}

    try:
        oldest = parse_timestamp(_take(collection, "oldest_tweet",
                                       "oldest_tweet"))
    except ValueError:
        raise InvalidConfig("oldest_tweet", "unparseable timestamp")
    try:
        newest = parse_timestamp(_take(collection, "newest_tweet",
                                       "newest_tweet"))
    except ValueError:
        raise InvalidConfig("newest_tweet", "unparseable timestamp")

    config = CollectionConfig(
        seed_usernames=tuple(_take(seed, "usernames", "seed.usernames")),
        max_watched_users=_take(limits, "max_watched_users",
                                "max_watched_users"),
        max_daily_increase=_take(limits, "max_daily_increase",
                                 "max_daily_increase"),
        max_daily_increase_ratio=_take(limits, "max_daily_increase_ratio",
                                       "max_daily_increase_ratio"),
        min_appearances_before_watched=_take(
            limits, "min_appearances_before_watched",
            "min_appearances_before_watched"),
        ignore_tweet_media=_take(collection, "ignore_tweet_media",
                                 "ignore_tweet_media"),
        oldest_tweet=oldest,
        newest_tweet=newest,
        search_languages=tuple(_take(collection, "search_languages",
                                     "search_languages")),
        max_threads=_take(collection, "max_threads", "max_threads"),
        min_tweets_before_restricting_by_language=_take(
            collection, "min_tweets_before_restricting_by_language",
            "min_tweets_before_restricting_by_language"),
        store_address=_take(storage, "address", "mongodb.address"),
        database_name=_take(storage, "database", "mongodb.database"),
        snapshot_enabled=_take(storage, "drive_api_backup_enabled",
                               "mongodb.drive_api_backup_enabled"),
        notifier_webhook=notifications.pop("webhook", None),
        database_stats_file=_take(data, "database_stats_file",
                                  "database_stats_file"),
        seconds_between_db_stats_log=_take(data, "seconds_between_db_stats_log",
                                           "seconds_between_db_stats_log"),
        api_keys_file=_take(data, "api_keys", "api_keys"),
        extensions=_collect_extensions(data, seed, collection, limits,
                                       storage, notifications),
    )
    _validate_config(config)
    return config


def _collect_extensions(top, seed, collection, limits, storage,
                        notifications) -> dict:
    extensions = dict(top)
    for name, leftover in (("seed", seed), ("collection", collection),
                           ("mongodb", storage),
                           ("notifications", notifications)):
        if leftover:
            extensions.setdefault(name, {}).update(leftover)
    if limits:
        extensions.setdefault("collection", {}) \
            .setdefault("limits", {}).update(limits)
    return extensions


def _validate_config(config: CollectionConfig) -> None:
    for name in _POSITIVE_FIELDS:
        value = getattr(config, name)
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            raise InvalidConfig(name, f"{name} must be a positive integer")
    ratio = config.max_daily_increase_ratio
    if not isinstance(ratio, (int, float)) or not 0 < ratio <= 1:
        raise InvalidConfig("max_daily_increase_ratio",
                            "max_daily_increase_ratio must be in (0, 1]")
    if config.oldest_tweet >= config.newest_tweet:
        raise InvalidConfig("oldest_tweet",
                            "oldest_tweet must precede newest_tweet")
    if not config.search_languages:
        raise InvalidConfig("search_languages",
                            "search_languages must be non-empty")
    if config.max_daily_increase > config.max_watched_users:
        raise InvalidConfig("max_daily_increase",
                            "max_daily_increase exceeds max_watched_users")
    if not isinstance(config.ignore_tweet_media, bool):
        raise InvalidConfig("ignore_tweet_media",
                            "ignore_tweet_media must be a boolean")
    if not isinstance(config.snapshot_enabled, bool):
        raise InvalidConfig("mongodb.drive_api_backup_enabled",
                            "drive_api_backup_enabled must be a boolean")


def serialize_config(config: CollectionConfig) -> str:
    """Inverse of parse_config on the known-field set; extensions merged
    back into their original nesting."""
    data: dict[str, Any] = {
        "seed": {"usernames": list(config.seed_usernames)},
        "collection": {
            "limits": {
                "max_watched_users": config.max_watched_users,
                "max_daily_increase": config.max_daily_increase,
                "max_daily_increase_ratio": config.max_daily_increase_ratio,
                "min_appearances_before_watched":
                    config.min_appearances_before_watched,
            },
            "ignore_tweet_media": config.ignore_tweet_media,
            "oldest_tweet": format_wire_timestamp(config.oldest_tweet),
            "newest_tweet": format_wire_timestamp(config.newest_tweet),
            "search_languages": list(config.search_languages),
            "max_threads": config.max_threads,
            "min_tweets_before_restricting_by_language":
                config.min_tweets_before_restricting_by_language,
        },
        "mongodb": {
            "address": config.store_address,
            "database": config.database_name,
            "drive_api_backup_enabled": config.snapshot_enabled,
        },
        "notifications": {},
        "database_stats_file": config.database_stats_file,
        "seconds_between_db_stats_log": config.seconds_between_db_stats_log,
        "api_keys": config.api_keys_file,
    }
    if config.notifier_webhook is not None:
        data["notifications"]["webhook"] = config.notifier_webhook
    for key, value in config.extensions.items():
        if key in data and isinstance(data[key], dict) \
                and isinstance(value, dict):
            _merge_nested(data[key], value)
        else:
            data[key] = value
    if not data["notifications"]:
        del data["notifications"]
    return json.dumps(data, indent=2, ensure_ascii=False)


def _merge_nested(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if key in base and isinstance(base[key], dict) \
                and isinstance(value, dict):
            _merge_nested(base[key], value)
        else:
            base[key] = value


class TaskPhase(str, Enum):
    SETUP = "setup"
    RUN_ONCE = "run_once"
    SCHEDULED = "scheduled"


class Cadence(str, Enum):
    DAILY = "daily"
    HOURLY = "hourly"

    @property
    def period(self) -> timedelta:
        return timedelta(days=1) if self is Cadence.DAILY \
            else timedelta(hours=1)


@dataclass(frozen=True)
class TaskSpec:
    """A task identified by its phase directory and filename.

    Scheduled names are "HH_MM_label": the offset is relative to application
    launch (not midnight), repeated every cadence period.
    """

    name: str
    phase: TaskPhase
    cadence: Optional[Cadence] = None
    offset: Optional[timedelta] = None
    label: str = ""


_SCHEDULED_NAME = re.compile(r"^(\d{2})_(\d{2})_(.+)$")


def parse_task_name(filename: str) -> TaskSpec:
    """Parse "phase_dir/name[.py]" into a TaskSpec."""
    name = filename[:-3] if filename.endswith(".py") else filename
    if "/" not in name:
        raise BadTaskName(f"no phase directory in {filename!r}")
    phase_dir, base = name.split("/", 1)
    if phase_dir == "setup":
        return TaskSpec(name=name, phase=TaskPhase.SETUP, label=base)
    if phase_dir == "run_once":
        return TaskSpec(name=name, phase=TaskPhase.RUN_ONCE, label=base)
    if phase_dir not in ("daily", "hourly"):
        raise BadTaskName(f"unknown phase directory {phase_dir!r}")
    cadence = Cadence(phase_dir)
    match = _SCHEDULED_NAME.match(base)
    if not match:
        raise BadTaskName(f"scheduled task {filename!r} lacks HH_MM_ prefix")
    hours, minutes, label = int(match.group(1)), int(match.group(2)), \
        match.group(3)
    if minutes >= 60:
        raise BadTaskName(f"minutes out of range in {filename!r}")
    offset = timedelta(hours=hours, minutes=minutes)
    if offset >= cadence.period:
        raise BadTaskName(
            f"offset {offset} not below the {cadence.value} period")
    return TaskSpec(name=name, phase=TaskPhase.SCHEDULED, cadence=cadence,
                    offset=offset, label=label)
