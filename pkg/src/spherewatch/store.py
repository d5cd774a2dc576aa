"""Document persistence: id-deduplicated collections, paged reads for the
parallel batcher, snapshot/restore, and the always-on stats log.

Documents are plain JSON-compatible dicts with an integer "id". The store is
in-memory with durable snapshots (one canonical JSONL file per collection
plus a digest manifest), which stands in for the paper-scale database behind
the same contract.

Merge rules on upsert of an existing id:
- incoming fields that are absent (or None) never erase stored values;
- "appearances" is owned by increment_appearances: merges keep max(old, new)
  so the counter is never decremented;
- "status"/"status_changed_at" are owned by mark_status and ignored by merge,
  so a hydration pass can never silently reverse a suspension mark;
- "first_collected_at" keeps its first value;
- "favorited_by" merges as a sorted set union.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

from .domain import iso

COLLECTIONS = ("accounts", "tweets")

IoError = OSError


class StoreUnavailable(RuntimeError):
    """Raised when operating on a closed store."""


class DigestMismatch(ValueError):
    """Snapshot content does not match its manifest digest."""


class UnknownAccount(KeyError):
    """Account id cannot be stub-inserted (not an integer)."""


STATS_HEADER = "timestamp,accounts,tweets,bytes"

_MERGE_KEEP_FIRST = ("first_collected_at",)
_MERGE_MAX = ("appearances",)
_MERGE_UNION = ("favorited_by",)
_MERGE_OWNED = ("status", "status_changed_at")


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


@dataclass
class SnapshotManifest:
    created_at: str
    counts: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"created_at": self.created_at,
                           "counts": self.counts,
                           "digests": self.digests}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SnapshotManifest":
        data = json.loads(text)
        return cls(created_at=data["created_at"], counts=data["counts"],
                   digests=data["digests"])


class DocumentStore:
    """Thread-safe document store over the fixed {accounts, tweets}
    collections. Writes are atomic per document; snapshot takes a
    point-in-time view under the same lock."""

    def __init__(self, stats_path: Optional[str] = None,
                 stats_interval_s: int = 10):
        self._collections: dict[str, dict[int, dict]] = {
            name: {} for name in COLLECTIONS}
        self._sizes: dict[str, int] = {name: 0 for name in COLLECTIONS}
        self._lock = threading.RLock()
        self._closed = False
        self.stats_path = stats_path
        self.stats_interval_s = stats_interval_s

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def _collection(self, name: str) -> dict[int, dict]:
        if self._closed:
            raise StoreUnavailable("store is closed")
        try:
            return self._collections[name]
        except KeyError:
            raise StoreUnavailable(f"unknown collection {name!r}") from None

    def upsert(self, collection: str, records: Iterable[dict]) -> dict:
        inserted = 0
        updated = 0
        with self._lock:
            docs = self._collection(collection)
            for record in records:
                doc_id = int(record["id"])
                incoming = {k: v for k, v in record.items() if v is not None}
                incoming["id"] = doc_id
                existing = docs.get(doc_id)
                if existing is None:
                    docs[doc_id] = incoming
                    self._sizes[collection] += len(canonical_json(incoming))
                    inserted += 1
                else:
                    self._sizes[collection] -= len(canonical_json(existing))
                    merged = dict(existing)
                    for key, value in incoming.items():
                        if key in _MERGE_OWNED:
                            continue
                        if key in _MERGE_KEEP_FIRST and key in merged:
                            continue
                        if key in _MERGE_MAX and key in merged:
                            merged[key] = max(merged[key], value)
                            continue
                        if key in _MERGE_UNION:
                            merged[key] = sorted(
                                set(merged.get(key, [])) | set(value))
                            continue
                        merged[key] = value
                    docs[doc_id] = merged
                    self._sizes[collection] += len(canonical_json(merged))
                    updated += 1
        return {"inserted": inserted, "updated": updated}

    def get(self, collection: str, doc_id: int) -> Optional[dict]:
        with self._lock:
            doc = self._collection(collection).get(int(doc_id))
            return copy.deepcopy(doc) if doc is not None else None

    def count(self, collection: str,
              predicate: Optional[Callable[[dict], bool]] = None) -> int:
        with self._lock:
            docs = self._collection(collection)
            if predicate is None:
                return len(docs)
            return sum(1 for doc in docs.values() if predicate(doc))

    def query_page(self, collection: str,
                   predicate: Optional[Callable[[dict], bool]] = None,
                   skip: int = 0, limit: Optional[int] = None) -> list[dict]:
        """The [skip, skip+limit) slice of the id-ordered filtered set.

        Id order is the fixed total order, so pages are stable for a frozen
        filter result and the batcher is deterministic.
        """
        if skip < 0 or (limit is not None and limit < 0):
            raise ValueError("skip and limit must be non-negative")
        out: list[dict] = []
        if limit == 0:
            return out
        with self._lock:
            docs = self._collection(collection)
            matched = 0
            for doc_id in sorted(docs):
                doc = docs[doc_id]
                if predicate is not None and not predicate(doc):
                    continue
                if matched >= skip:
                    out.append(copy.deepcopy(doc))
                    if limit is not None and len(out) >= limit:
                        break
                matched += 1
        return out

    def iter_docs(self, collection: str) -> list[dict]:
        """Stable id-ordered snapshot of live documents for read-only
        aggregate passes. Callers must not mutate the returned dicts;
        use query_page for defensive copies."""
        with self._lock:
            docs = self._collection(collection)
            return [docs[doc_id] for doc_id in sorted(docs)]

    def increment_appearances(self, ids: Iterable[int]) -> int:
        """+1 appearance per distinct id in the call; missing ids become
        undecided stubs with appearances=1."""
        touched = 0
        with self._lock:
            docs = self._collection("accounts")
            for raw_id in set(ids):
                doc_id = int(raw_id)
                existing = docs.get(doc_id)
                if existing is None:
                    doc = {"id": doc_id, "appearances": 1,
                           "watched": "undecided", "status": "active"}
                    docs[doc_id] = doc
                    self._sizes["accounts"] += len(canonical_json(doc))
                else:
                    self._sizes["accounts"] -= len(canonical_json(existing))
                    existing["appearances"] = \
                        int(existing.get("appearances", 0)) + 1
                    self._sizes["accounts"] += len(canonical_json(existing))
                touched += 1
        return touched

    def mark_status(self, account_id: int, status: str,
                    at: datetime) -> dict:
        """Set account status with first-detection timestamp semantics:
        re-marking the same status keeps the original timestamp."""
        try:
            doc_id = int(account_id)
        except (TypeError, ValueError):
            raise UnknownAccount(account_id) from None
        with self._lock:
            docs = self._collection("accounts")
            existing = docs.get(doc_id)
            if existing is None:
                doc = {"id": doc_id, "appearances": 0,
                       "watched": "undecided", "status": status,
                       "status_changed_at": iso(at)}
                docs[doc_id] = doc
                self._sizes["accounts"] += len(canonical_json(doc))
                return copy.deepcopy(doc)
            if existing.get("status", "active") != status:
                self._sizes["accounts"] -= len(canonical_json(existing))
                existing["status"] = status
                existing["status_changed_at"] = iso(at)
                self._sizes["accounts"] += len(canonical_json(existing))
            return copy.deepcopy(existing)

    def set_fields(self, collection: str, doc_id: int, **fields) -> None:
        """Targeted field update outside merge rules (single writer per
        account task contract); creates no document."""
        with self._lock:
            docs = self._collection(collection)
            doc = docs.get(int(doc_id))
            if doc is None:
                raise UnknownAccount(doc_id)
            self._sizes[collection] -= len(canonical_json(doc))
            for key, value in fields.items():
                if value is None:
                    doc.pop(key, None)
                else:
                    doc[key] = value
            self._sizes[collection] += len(canonical_json(doc))

    def store_bytes(self) -> int:
        with self._lock:
            return sum(self._sizes.values())

    def snapshot(self, sink: str) -> SnapshotManifest:
        """Write accounts.jsonl + tweets.jsonl (canonical JSON, sorted by
        id) and manifest.json with counts and SHA-256 digests."""
        sink_path = Path(sink)
        sink_path.mkdir(parents=True, exist_ok=True)
        with self._lock:
            views = {name: [canonical_json(docs[i]) for i in sorted(docs)]
                     for name, docs in self._collections.items()}
            created = iso(datetime.now(timezone.utc))
        manifest = SnapshotManifest(created_at=created)
        for name, lines in views.items():
            payload = ("\n".join(lines) + "\n") if lines else ""
            raw = payload.encode("utf-8")
            (sink_path / f"{name}.jsonl").write_bytes(raw)
            manifest.counts[name] = len(lines)
            manifest.digests[name] = hashlib.sha256(raw).hexdigest()
        (sink_path / "manifest.json").write_text(manifest.to_json())
        return manifest

    def restore(self, source: str) -> SnapshotManifest:
        """Replace collections from a snapshot directory after verifying
        the manifest digests."""
        source_path = Path(source)
        manifest = SnapshotManifest.from_json(
            (source_path / "manifest.json").read_text())
        loaded: dict[str, dict[int, dict]] = {}
        for name in COLLECTIONS:
            raw = (source_path / f"{name}.jsonl").read_bytes()
            digest = hashlib.sha256(raw).hexdigest()
            if digest != manifest.digests.get(name):
                raise DigestMismatch(
                    f"collection {name}: digest {digest} != manifest")
            docs: dict[int, dict] = {}
            for line in raw.decode("utf-8").splitlines():
                if line:
                    doc = json.loads(line)
                    docs[int(doc["id"])] = doc
            if len(docs) != manifest.counts.get(name, -1):
                raise DigestMismatch(
                    f"collection {name}: count {len(docs)} != manifest")
            loaded[name] = docs
        with self._lock:
            if self._closed:
                raise StoreUnavailable("store is closed")
            self._collections = loaded
            self._sizes = {
                name: sum(len(canonical_json(d)) for d in docs.values())
                for name, docs in loaded.items()}
        return manifest

    def stats_append(self, now: datetime) -> str:
        """Append one "timestamp,accounts,tweets,bytes" row; creates the
        file with its header on first use."""
        if self.stats_path is None:
            raise IoError("store has no stats_path configured")
        with self._lock:
            row = f"{iso(now)},{len(self._collections['accounts'])}," \
                  f"{len(self._collections['tweets'])},{self.store_bytes()}"
        path = Path(self.stats_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        new_file = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8") as handle:
            if new_file:
                handle.write(STATS_HEADER + "\n")
            handle.write(row + "\n")
        return row

    def read_stats(self) -> list[dict]:
        """Parse the stats CSV into row dicts (for the monitoring API)."""
        if self.stats_path is None or not os.path.exists(self.stats_path):
            return []
        rows = []
        with open(self.stats_path, encoding="utf-8") as handle:
            header = handle.readline().strip().split(",")
            for line in handle:
                parts = line.strip().split(",")
                if len(parts) != len(header):
                    continue
                row = dict(zip(header, parts))
                for key in ("accounts", "tweets", "bytes"):
                    row[key] = int(row[key])
                rows.append(row)
        return rows
