"""Labeled account-type construction.

Four account types with a fixed strength order: suspended > peer >
lda_found > fakenews. Fake-news sharers come from URL-domain mining with
a curated seed list; candidate domains for human review come from the
top sharers' other links; overlaps between types resolve by removing the
account from the weaker type.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple
from urllib.parse import urlsplit

from .domain import AccountRecord, AccountStatus, TweetRecord

TYPE_PRIORITY = ("suspended", "peer", "lda_found", "fakenews")
SEED_DOMAINS_RESOURCE = "fake_domains_seed.txt"
DISCOVERED_DOMAINS_RESOURCE = "fake_domains_discovered.txt"
REVIEW_TEMPLATE_RESOURCE = "lda_review_template.tsv"
TOP_POSTERS = 50
TOP_DOMAINS = 200

# social-platform hosts the discovery pass never proposes for review
DEFAULT_SAFELIST = frozenset({
    "facebook.com", "youtube.com", "instagram.com", "twitter.com",
    "youtu.be", "fb.me",
})


class EmptyConditionSet(Exception):
    """No account shares any of the conditioning domains."""


class FileUnreadable(Exception):
    pass


def registrable_host(url: str) -> Optional[str]:
    """Lowercased host with any "www." prefix stripped; None when the
    string has no usable host."""
    try:
        host = urlsplit(url.strip()).hostname
    except ValueError:
        return None
    if not host:
        return None
    host = host.lower().rstrip(".")
    if host.startswith("www."):
        host = host[4:]
    return host or None


def host_matches(host: str, domain: str) -> bool:
    """Exact host or dot-boundary suffix match."""
    return host == domain or host.endswith("." + domain)


def _normalize_tweet(tweet) -> TweetRecord:
    if isinstance(tweet, TweetRecord):
        return tweet
    return TweetRecord.from_doc(dict(tweet))


def _normalize_account(account) -> AccountRecord:
    if isinstance(account, AccountRecord):
        return account
    return AccountRecord.from_doc(dict(account))


@dataclass
class DomainShareIndex:
    domains: Tuple[str, ...]
    domain_counts: Counter
    account_counts: Dict[int, Counter]
    account_all_hosts: Dict[int, Counter]

    def total_shares(self) -> int:
        return sum(self.domain_counts.values())

    def sharers(self, domain: str) -> FrozenSet[int]:
        return frozenset(a for a, c in self.account_counts.items()
                         if c.get(domain))


def mine_shares(tweets: Iterable, domains: Iterable[str]) -> DomainShareIndex:
    """Count fake-domain share events over every tweet kind.

    A tweet contributes at most one event per (account, domain): several
    links to the same site in one tweet still count once.
    """
    normalized = tuple(dict.fromkeys(
        d.strip().lower() for d in domains if d.strip()))
    domain_counts: Counter = Counter()
    account_counts: Dict[int, Counter] = {}
    account_all_hosts: Dict[int, Counter] = {}
    for tweet in tweets:
        record = _normalize_tweet(tweet)
        hosts = {h for h in (registrable_host(u) for u in record.urls) if h}
        if not hosts:
            continue
        all_hosts = account_all_hosts.setdefault(record.author_id, Counter())
        for host in hosts:
            all_hosts[host] += 1
        matched = {d for d in normalized
                   if any(host_matches(h, d) for h in hosts)}
        if not matched:
            continue
        mine = account_counts.setdefault(record.author_id, Counter())
        for domain in matched:
            domain_counts[domain] += 1
            mine[domain] += 1
    return DomainShareIndex(domains=normalized, domain_counts=domain_counts,
                            account_counts=account_counts,
                            account_all_hosts=account_all_hosts)


def discover_domains(index: DomainShareIndex,
                     top_posters: int = TOP_POSTERS,
                     top_domains: int = TOP_DOMAINS,
                     safelist: Iterable[str] = DEFAULT_SAFELIST
                     ) -> List[Tuple[str, int]]:
    """Candidate domains for human review: what the heaviest fake-news
    posters link to besides the seed list. Ranked by share count, ties
    by domain name; safelisted hosts removed."""
    safelist = tuple(s.strip().lower() for s in safelist)
    posters = sorted(index.account_counts,
                     key=lambda a: (-sum(index.account_counts[a].values()),
                                    a))[:top_posters]
    pool: Counter = Counter()
    for account in posters:
        pool.update(index.account_all_hosts.get(account, ()))
    candidates = [
        (host, count) for host, count in pool.items()
        if not any(host_matches(host, safe) for safe in safelist)]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return candidates[:top_domains]


def conditional_share_probability(target: str, others: Iterable[str],
                                  index: DomainShareIndex) -> float:
    """P(account shares target | account shares any of the others)."""
    target = target.strip().lower()
    condition: set = set()
    for domain in others:
        condition |= index.sharers(domain.strip().lower())
    if not condition:
        raise EmptyConditionSet("no account shares the conditioning domains")
    return len(index.sharers(target) & condition) / len(condition)


@dataclass(frozen=True)
class PeerImport:
    ids: FrozenSet[int]
    unresolved: Tuple[str, ...]


def import_peer_list(path, accounts: Iterable) -> PeerImport:
    """Resolve one screen-name-or-id per line against known accounts."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(str(exc)) from None
    by_name: Dict[str, int] = {}
    known_ids = set()
    for account in accounts:
        record = _normalize_account(account)
        known_ids.add(record.id)
        if record.screen_name:
            by_name[record.screen_name.lower()] = record.id
    resolved = set()
    unresolved: List[str] = []
    for raw in lines:
        entry = raw.strip()
        if not entry:
            continue
        name = entry.lstrip("@").lower()
        if entry.lstrip("-").isdigit() and int(entry) in known_ids:
            resolved.add(int(entry))
        elif name in by_name:
            resolved.add(by_name[name])
        elif entry not in unresolved:
            unresolved.append(entry)
    return PeerImport(ids=frozenset(resolved), unresolved=tuple(unresolved))


def suspended_ids(accounts: Iterable) -> FrozenSet[int]:
    """Accounts the store has marked suspended."""
    return frozenset(
        record.id for record in map(_normalize_account, accounts)
        if record.status is AccountStatus.SUSPENDED)


@dataclass(frozen=True)
class Removal:
    account_id: int
    removed_from: str
    kept_in: str


@dataclass(frozen=True)
class LabelSets:
    suspended: FrozenSet[int]
    peer: FrozenSet[int]
    lda_found: FrozenSet[int]
    fakenews: FrozenSet[int]
    removals: Tuple[Removal, ...]

    def by_type(self) -> Dict[str, FrozenSet[int]]:
        return {name: getattr(self, name) for name in TYPE_PRIORITY}

    def all_labeled(self) -> FrozenSet[int]:
        result: frozenset = frozenset()
        for name in TYPE_PRIORITY:
            result |= getattr(self, name)
        return result

    def regular(self, universe: Iterable[int]) -> FrozenSet[int]:
        return frozenset(universe) - self.all_labeled()


def resolve_overlaps(raw_sets: Mapping[str, Iterable[int]]) -> LabelSets:
    """Make the four type sets disjoint: an id in two types keeps only
    its strongest membership and the weaker set loses it."""
    unknown = set(raw_sets) - set(TYPE_PRIORITY)
    if unknown:
        raise ValueError(f"unknown label types: {sorted(unknown)}")
    sets = {name: set(raw_sets.get(name, ())) for name in TYPE_PRIORITY}
    removals: List[Removal] = []
    for i, strong in enumerate(TYPE_PRIORITY):
        for weak in TYPE_PRIORITY[i + 1:]:
            for account_id in sorted(sets[strong] & sets[weak]):
                removals.append(Removal(account_id=account_id,
                                        removed_from=weak, kept_in=strong))
                sets[weak].discard(account_id)
    return LabelSets(suspended=frozenset(sets["suspended"]),
                     peer=frozenset(sets["peer"]),
                     lda_found=frozenset(sets["lda_found"]),
                     fakenews=frozenset(sets["fakenews"]),
                     removals=tuple(removals))


def _read_resource(name: str) -> str:
    return (resources.files("spherewatch.data") / name).read_text(
        encoding="utf-8")


def load_seed_domains() -> List[str]:
    return [line.strip() for line in
            _read_resource(SEED_DOMAINS_RESOURCE).splitlines()
            if line.strip()]


def load_discovered_domains() -> List[str]:
    return [line.strip() for line in
            _read_resource(DISCOVERED_DOMAINS_RESOURCE).splitlines()
            if line.strip()]


def write_review_template(path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_read_resource(REVIEW_TEMPLATE_RESOURCE))


def read_lda_review(path) -> FrozenSet[int]:
    """Ids marked yes in a filled review sheet."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(str(exc)) from None
    approved = set()
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) >= 4 and fields[3].strip().lower() == "yes":
            approved.add(int(fields[0]))
    return frozenset(approved)
