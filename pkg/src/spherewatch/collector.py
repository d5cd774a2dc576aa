"""The collection task bodies and the plan that binds them to the schedule.

Tasks communicate only through the store. Watch-state transitions are
owned here (the store's merge rules deliberately do not protect "watched"),
so the monotone rules hold: watched never reverts, reject_language is
terminal while the configured languages stand.
"""

import math
from collections import Counter
from datetime import timedelta
from typing import Iterable, Optional

import requests

from .domain import CollectionConfig, iso, parse_task_name
from .netclient import PlatformClient, PlatformError
from .scheduler import NamedTask, RunPlan
from .scheduler import reduce as merge_outputs
from .store import DocumentStore

TASK_NAMES = (
    "setup/migrations",
    "setup/insert_seeds",
    "run_once/db_stats_loop",
    "daily/00_00_seed_followers",
    "daily/00_30_seed_friends",
    "daily/01_00_account_details",
    "daily/03_00_tweet_collection",
    "daily/06_00_favorites",
    "daily/08_00_tweet_processing",
    "daily/08_30_seed_tweet_processing",
    "daily/09_00_add_watched",
    "daily/10_00_backup",
    "hourly/00_15_hashtag_search",
)


class Collector:
    """Task bodies over (config, store, client). One instance serves the
    whole plan; per-run state lives in the store."""

    def __init__(self, config: CollectionConfig, store: DocumentStore,
                 client: PlatformClient):
        self.config = config
        self.store = store
        self.client = client

    def reconfigure(self, new_config: CollectionConfig) -> None:
        """Swap the config seen by future launches. Bodies snapshot
        self.config once at entry (a single reference read), so runs in
        flight keep what they started with."""
        self.config = new_config

    # -- shared helpers --------------------------------------------------

    def _seed_ids(self) -> list[int]:
        return [doc["id"] for doc in self.store.iter_docs("accounts")
                if doc.get("seed")]

    def _watch(self, account_id: int) -> bool:
        """Mark watched unless terminal-rejected; True when this created
        the account."""
        doc = self.store.get("accounts", account_id)
        if doc is None:
            self.store.upsert("accounts", [{
                "id": account_id, "watched": "watched",
                "appearances": 0, "status": "active"}])
            return True
        if doc.get("watched") == "undecided":
            self.store.set_fields("accounts", account_id,
                                  watched="watched")
        return False

    @staticmethod
    def _related_accounts(doc: dict) -> set[int]:
        related = {int(doc["author_id"])}
        related.update(int(m) for m in doc.get("mentions", ()))
        ref_author = doc.get("referenced_author_id")
        if ref_author is not None:
            related.add(int(ref_author))
        return related

    def _log_error(self, ctx, account_id: int, error: PlatformError):
        ctx.log("WARNING",
                f"account {account_id}: "
                f"{type(error).__name__}: {error}")

    # -- setup -----------------------------------------------------------

    def migrations(self, ctx):
        for collection in ("accounts", "tweets"):
            ctx.log("INFO", f"collection {collection}: "
                            f"{self.store.count(collection)} documents")

    def insert_seeds(self, ctx):
        records, missing = self.client.lookup_by_screen_names(
            self.config.seed_usernames)
        for record in records:
            doc = record.to_doc()
            doc.pop("status", None)
            doc["seed"] = True
            doc["depth"] = 0
            doc["watched"] = "watched"
            self.store.upsert("accounts", [doc])
        for name in missing:
            ctx.log("WARNING", f"seed {name!r} not resolvable")
        ctx.log("INFO", f"{len(records)} seed accounts inserted")
        if not records:
            raise RuntimeError("no seed account could be resolved")

    # -- run_once --------------------------------------------------------

    def db_stats_loop(self, ctx):
        interval = max(1, int(self.config.seconds_between_db_stats_log))
        while True:
            self.store.stats_append(ctx.clock.now())
            ctx.sleep(interval)

    # -- seed graph ------------------------------------------------------

    def seed_followers(self, ctx):
        return self._seed_graph(ctx, "followers")

    def seed_friends(self, ctx):
        return self._seed_graph(ctx, "friends")

    def _seed_graph(self, ctx, direction: str) -> int:
        inserted = 0
        for seed_id in self._seed_ids():
            ctx.check_cancelled()
            result = self.client.guarded_call(
                self.client.fetch_relation_ids, seed_id, direction)
            if isinstance(result, PlatformError):
                self._log_error(ctx, seed_id, result)
                continue
            for account_id in result:
                if self._watch(account_id):
                    inserted += 1
        ctx.log("INFO", f"{direction}: {inserted} new accounts watched")
        return inserted

    # -- hydration -------------------------------------------------------

    def account_details(self, ctx) -> int:
        stubs = [doc["id"] for doc in self.store.iter_docs("accounts")
                 if "screen_name" not in doc]
        if not stubs:
            ctx.log("INFO", "no stub accounts")
            return 0
        result = self.client.guarded_call(self.client.lookup_users, stubs)
        if isinstance(result, PlatformError):
            raise result
        records, missing = result
        for record in records:
            doc = record.to_doc()
            # watched/status transitions stay owned by their tasks
            doc.pop("watched", None)
            doc.pop("status", None)
            doc.pop("appearances", None)
            doc["first_collected_at"] = doc.get("collected_at")
            self.store.upsert("accounts", [doc])
        ctx.log("INFO", f"{len(records)} hydrated, {len(missing)} missing")
        return len(records)

    # -- timelines -------------------------------------------------------

    def tweet_collection(self, ctx) -> int:
        return self._timeline_pass(ctx, "posts")

    def favorites(self, ctx) -> int:
        return self._timeline_pass(ctx, "favorites")

    def _iterated_accounts(self, mode: str) -> list[int]:
        wanted = ("watched",) if mode == "favorites" \
            else ("watched", "undecided")
        return [doc["id"] for doc in self.store.iter_docs("accounts")
                if doc.get("watched", "undecided") in wanted]

    def _timeline_pass(self, ctx, mode: str) -> int:
        config = self.config
        account_ids = self._iterated_accounts(mode)
        total = len(account_ids)
        if total == 0:
            return 0
        window = (config.oldest_tweet, config.newest_tweet)
        marker = "last_tweet_id" if mode == "posts" else "last_favorite_id"
        stored = 0

        def pull(skip: int, limit: int) -> int:
            count = 0
            for account_id in account_ids[skip:skip + limit]:
                ctx.check_cancelled()
                account = self.store.get("accounts", account_id)
                since = account.get(marker) if account else None
                result = self.client.guarded_call(
                    self.client.fetch_timeline, account_id, mode,
                    since_id=since, window=window)
                if isinstance(result, PlatformError):
                    self._log_error(ctx, account_id, result)
                    continue
                if not result:
                    continue
                docs = []
                for record in result:
                    tweet_doc = record.to_doc()
                    # never reset a processed mark on refetch
                    tweet_doc.pop("processed", None)
                    if mode == "favorites":
                        tweet_doc["favorited_by"] = [account_id]
                    docs.append(tweet_doc)
                self.store.upsert("tweets", docs)
                newest = max(record.id for record in result)
                self.store.set_fields("accounts", account_id,
                                      **{marker: newest})
                count += len(result)
            return count

        batch = max(1, math.ceil(total / config.max_threads))
        outputs = ctx.parallel_run(pull, total, batch,
                                   config.max_threads)
        stored = merge_outputs(outputs, lambda a, b: a + b, 0)
        if mode == "posts":
            self._restrict_languages(ctx, account_ids, config)
        ctx.log("INFO", f"{mode}: {stored} tweets stored "
                        f"across {total} accounts")
        return stored

    def _restrict_languages(self, ctx, account_ids: Iterable[int],
                            config: CollectionConfig):
        threshold = config.min_tweets_before_restricting_by_language
        allowed = set(config.search_languages)
        by_author: dict[int, Counter] = {}
        for doc in self.store.iter_docs("tweets"):
            author = int(doc["author_id"])
            by_author.setdefault(author, Counter())[
                doc.get("lang", "und")] += 1
        rejected = 0
        for account_id in account_ids:
            langs = by_author.get(account_id)
            if langs is None or sum(langs.values()) < threshold:
                continue
            majority = max(langs.items(), key=lambda kv: (kv[1], kv[0]))[0]
            self.store.set_fields("accounts", account_id,
                                  most_common_language=majority)
            if majority in allowed:
                continue
            doc = self.store.get("accounts", account_id)
            # exclusion applies to the undecided pipeline only
            if doc.get("watched", "undecided") == "undecided":
                self.store.set_fields("accounts", account_id,
                                      watched="rejected")
                rejected += 1
        if rejected:
            ctx.log("INFO", f"{rejected} accounts excluded by language")

    # -- processing ------------------------------------------------------

    def tweet_processing(self, ctx) -> int:
        processed = 0
        for doc in self.store.iter_docs("tweets"):
            if doc.get("processed"):
                continue
            ctx.check_cancelled()
            self.store.increment_appearances(self._related_accounts(doc))
            self.store.set_fields("tweets", doc["id"], processed=True)
            processed += 1
        ctx.log("INFO", f"{processed} tweets processed")
        return processed

    def seed_tweet_processing(self, ctx) -> int:
        seeds = set(self._seed_ids())
        watched = 0
        processed = 0
        for doc in self.store.iter_docs("tweets"):
            if doc.get("seed_processed") \
                    or int(doc["author_id"]) not in seeds:
                continue
            ctx.check_cancelled()
            for account_id in self._related_accounts(doc):
                self._watch(account_id)
                watched += 1
            self.store.set_fields("tweets", doc["id"], seed_processed=True)
            processed += 1
        ctx.log("INFO", f"{processed} seed tweets processed, "
                        f"{watched} watch marks")
        return processed

    # -- promotion -------------------------------------------------------

    def add_watched(self, ctx) -> int:
        config = self.config
        watched_count = self.store.count(
            "accounts", lambda d: d.get("watched") == "watched")
        capacity = config.max_watched_users - watched_count
        if capacity <= 0:
            ctx.log("INFO", "watched ceiling reached; 0 promoted")
            return 0
        cap = min(config.max_daily_increase,
                  math.floor(config.max_daily_increase_ratio
                             * watched_count),
                  capacity)
        threshold = config.min_appearances_before_watched
        eligible = [(doc.get("appearances", 0), doc["id"])
                    for doc in self.store.iter_docs("accounts")
                    if doc.get("watched", "undecided") == "undecided"
                    and doc.get("appearances", 0) >= threshold]
        eligible.sort(key=lambda pair: (-pair[0], pair[1]))
        promoted = 0
        for _, account_id in eligible[:cap]:
            self.store.set_fields("accounts", account_id,
                                  watched="watched")
            promoted += 1
        ctx.log("INFO", f"{promoted} accounts promoted "
                        f"({len(eligible)} eligible, cap {cap})")
        return promoted

    # -- hashtag search --------------------------------------------------

    def hashtag_search(self, ctx) -> int:
        config = self.config
        now = ctx.clock.now()
        cutoff = iso(now - timedelta(hours=24))
        seeds = set(self._seed_ids())
        tags = set()
        for doc in self.store.iter_docs("tweets"):
            if int(doc["author_id"]) not in seeds:
                continue
            if doc["created_at"] < cutoff:
                continue
            tags.update(doc.get("hashtags", ()))
        inserted = 0
        for tag in sorted(tags):
            ctx.check_cancelled()
            result = self.client.guarded_call(
                self.client.search_tweets, f"#{tag}",
                config.search_languages)
            if isinstance(result, PlatformError):
                self._log_error(ctx, 0, result)
                continue
            if result:
                docs = []
                for record in result:
                    tweet_doc = record.to_doc()
                    tweet_doc.pop("processed", None)
                    docs.append(tweet_doc)
                outcome = self.store.upsert("tweets", docs)
                inserted += outcome["inserted"]
        ctx.log("INFO", f"{len(tags)} hashtags searched, "
                        f"{inserted} new tweets")
        return inserted

    # -- snapshots -------------------------------------------------------

    def backup(self, ctx):
        config = self.config
        if not config.snapshot_enabled:
            ctx.log("INFO", "snapshots disabled")
            return None
        sink = config.extensions.get("snapshot_dir", "out/snapshots")
        try:
            manifest = self.store.snapshot(sink)
        except Exception as exc:
            ctx.log("ERROR", f"snapshot failed: {exc}")
            self._notify(ctx, str(exc), config.notifier_webhook)
            raise
        ctx.log("INFO", f"snapshot written to {sink}")
        return manifest

    def _notify(self, ctx, error: str, url: Optional[str]):
        if not url:
            return
        try:
            requests.post(url, json={"task": ctx.run.task_name,
                                     "error": error}, timeout=10)
        except requests.RequestException as exc:
            ctx.log("WARNING", f"notifier unreachable: {exc}")


def build_plan(config: CollectionConfig, store: DocumentStore,
               client: PlatformClient, clock=None,
               log_root: str = "out") -> RunPlan:
    collector = Collector(config, store, client)
    bodies = {
        "setup/migrations": collector.migrations,
        "setup/insert_seeds": collector.insert_seeds,
        "run_once/db_stats_loop": collector.db_stats_loop,
        "daily/00_00_seed_followers": collector.seed_followers,
        "daily/00_30_seed_friends": collector.seed_friends,
        "daily/01_00_account_details": collector.account_details,
        "daily/03_00_tweet_collection": collector.tweet_collection,
        "daily/06_00_favorites": collector.favorites,
        "daily/08_00_tweet_processing": collector.tweet_processing,
        "daily/08_30_seed_tweet_processing":
            collector.seed_tweet_processing,
        "daily/09_00_add_watched": collector.add_watched,
        "daily/10_00_backup": collector.backup,
        "hourly/00_15_hashtag_search": collector.hashtag_search,
    }
    plan = RunPlan(clock=clock, log_root=log_root, env=collector)
    for name in TASK_NAMES:
        spec = parse_task_name(name)
        task = NamedTask(spec=spec, body=bodies[name])
        if spec.phase.value == "setup":
            plan.setup.append(task)
        elif spec.phase.value == "run_once":
            plan.run_once.append(task)
        else:
            plan.scheduled.append(task)
    return plan
