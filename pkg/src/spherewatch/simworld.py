"""Deterministic synthetic-Twittersphere generator.

A world is a pure function of (seed, params): accounts with archetypes,
follow edges toward the seed accounts, a tweet stream over [t0, t1) with
kinds/hashtags/mentions/urls, favorites, and a suspension schedule. The
world object doubles as the test oracle (ground_truth) for everything the
collector and the analysis stages are expected to recover.

Shape guarantees the end-to-end suites lean on:
- every account is reachable: either it follows a seed account or it gets
  planted mentions from covered authors, so discovery converges in one or
  two daily cycles;
- malicious accounts (troll + fakenews_poster) concentrate mentions and
  political hashtags among themselves (default 5x affinity);
- exactly one news_org posts past the 3,200 timeline cap;
- suspended accounts go quiet two days before their suspension timestamp,
  so their stored timelines stay complete;
- "es"-language accounts never follow seeds and receive too few planted
  mentions to be promoted, exercising the language-rejection path.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

from .domain import iso

T0_DEFAULT = datetime(2019, 8, 1, tzinfo=timezone.utc)

ARCHETYPES = ("regular", "troll", "fakenews_poster", "clickbait",
              "news_org", "seed")

FAKE_DOMAINS_DEFAULT = (
    "averdadeagora.net", "diario-livre.info", "factosocultos.pt",
    "noticias-verdade.info", "olhovivo.biz", "patriota-news.org",
    "portugal-desperta.net", "verdadenua.info",
)

CLICKBAIT_DOMAINS = (
    "apanhados.org", "clicaagora.net", "naovaisacreditar.com",
    "soumaisclicks.net", "viraliza.pt",
)

NEWS_DOMAINS = (
    "dn.pt", "expresso.pt", "observador.pt", "publico.pt", "rtp.pt",
    "sicnoticias.pt",
)

POLITICAL_TAGS = (
    "acorda", "assembleia", "corrupcao", "eleicoes2019", "governo",
    "legislativas", "liberdade", "patriotas", "politica", "verdade",
    "eleições", "revolução",
)

NEUTRAL_TAGS = (
    "arte", "benfica", "bomdia", "cafe", "cinema", "fds", "fotografia",
    "futebol", "gastronomia", "lisboa", "moda", "musica", "natureza",
    "porto", "praia", "sextafeira", "sporting", "tecnologia", "verao",
    "viagens",
)

TOPIC_WORDS = {
    "politica": (
        "governo", "eleicoes", "partido", "votos", "campanha", "parlamento",
        "ministro", "orcamento", "estado", "politica", "debate", "urnas",
        "bancada", "coligacao", "mandato", "reforma", "lei", "proposta",
        "oposicao", "escandalo", "urgente", "verdade", "mentira", "imprensa",
        "censura", "povo", "nacao", "fronteiras", "soberania", "regime",
    ),
    "futebol": (
        "golo", "jogo", "equipa", "treinador", "estadio", "adeptos",
        "campeonato", "liga", "arbitro", "penalti", "defesa", "avancado",
        "vitoria", "derrota", "empate", "taca", "epoca", "transferencia",
        "relvado", "claque", "baliza", "marcador", "intervalo", "cartao",
        "falta", "cantos", "titulares", "plantel", "reforco", "golos",
    ),
    "economia": (
        "mercado", "juros", "banco", "euros", "crescimento", "inflacao",
        "salarios", "impostos", "divida", "investimento", "empresas",
        "exportacoes", "consumo", "bolsa", "acoes", "credito", "financas",
        "despesa", "receita", "emprego", "desemprego", "industria",
        "comercio", "turismo", "energia", "habitacao", "rendas", "pensoes",
        "subsidio", "economia",
    ),
}

_GLUE_WORDS = ("de", "que", "não", "para", "com", "uma", "mais", "por",
               "os", "as", "em", "um")

_LOCATIONS = ("Lisboa", "Porto", "Braga", "Coimbra", "Faro", "Aveiro", "",
              "Portugal", "Setúbal", "")

_KIND_MIX = {
    # original, retweet, reply, quote
    "regular": (0.62, 0.20, 0.12, 0.06),
    "troll": (0.50, 0.28, 0.12, 0.10),
    "fakenews_poster": (0.55, 0.25, 0.10, 0.10),
    "clickbait": (0.75, 0.10, 0.10, 0.05),
    "news_org": (0.90, 0.05, 0.03, 0.02),
    "seed": (0.70, 0.10, 0.12, 0.08),
}

_DAILY_RATES = {
    "regular": 2.0, "troll": 6.0, "fakenews_poster": 5.0,
    "clickbait": 5.0, "news_org": 12.0, "seed": 3.0,
}


class BadParams(ValueError):
    """World parameters outside documented ranges."""


class _Rng:
    """Draws derived from random.Random().random() only, so generated
    worlds stay byte-identical across interpreter versions."""

    def __init__(self, seed: int):
        self._random = random.Random(seed).random

    def uniform(self) -> float:
        return self._random()

    def randint(self, low: int, high: int) -> int:
        # inclusive bounds
        return min(high, low + int(self.uniform() * (high - low + 1)))

    def chance(self, p: float) -> bool:
        return self.uniform() < p

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def weighted_index(self, weights) -> int:
        total = sum(weights)
        mark = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if mark < acc:
                return i
        return len(weights) - 1

    def sample(self, seq, k: int) -> list:
        # partial Fisher-Yates over a copy
        pool = list(seq)
        k = min(k, len(pool))
        for i in range(k):
            j = self.randint(i, len(pool) - 1)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def poisson(self, lam: float) -> int:
        limit = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.uniform()
            if p <= limit:
                return k
            k += 1


@dataclass(frozen=True)
class WorldParams:
    n_accounts: int = 500
    n_seeds: int = 5
    n_news_org: int = 3
    n_clickbait: int = 30
    malicious_share: float = 0.10
    n_es_accounts: int = 12
    n_protected: int = 0
    days: int = 60
    post_days: int = 57
    follow_prob: float = 0.35
    mention_affinity: float = 5.0
    suspended_share: float = 0.40
    mega_poster: bool = True
    t0: datetime = T0_DEFAULT
    fake_domains: tuple = FAKE_DOMAINS_DEFAULT
    daily_rates: dict = field(default_factory=lambda: dict(_DAILY_RATES))


@dataclass
class SimAccount:
    id: int
    screen_name: str
    name: str
    archetype: str
    lang: str
    created_at: datetime
    description: str = ""
    location: str = ""
    url: Optional[str] = None
    protected: bool = False
    verified: bool = False
    suspended_at: Optional[datetime] = None
    followers_count: int = 0
    friends_count: int = 0
    statuses_count: int = 0
    favourites_count: int = 0


@dataclass
class SimTweet:
    id: int
    author_id: int
    created_at: datetime
    text: str
    lang: str
    kind: str
    hashtags: list
    mentions: list
    urls: list
    ref_tweet_id: Optional[int] = None
    ref_author_id: Optional[int] = None


def _validate(params: WorldParams) -> None:
    p = params
    counted = p.n_seeds + p.n_news_org + p.n_clickbait + p.n_es_accounts
    n_malicious = round(p.n_accounts * p.malicious_share)
    if p.n_accounts <= 0 or p.n_seeds < 1:
        raise BadParams("need a positive account count and at least 1 seed")
    if not 0.0 <= p.malicious_share < 1.0:
        raise BadParams("malicious_share must be in [0, 1)")
    if counted + n_malicious > p.n_accounts:
        raise BadParams("archetype counts exceed n_accounts")
    if not 0.0 < p.follow_prob <= 1.0:
        raise BadParams("follow_prob must be in (0, 1]")
    if p.post_days < 1 or p.days < p.post_days + 2:
        raise BadParams("need days >= post_days + 2 and post_days >= 1")
    if not 0.0 <= p.suspended_share <= 1.0:
        raise BadParams("suspended_share must be in [0, 1]")
    if p.n_protected < 0 or p.n_es_accounts < 0:
        raise BadParams("counts must be non-negative")
    if p.mention_affinity < 1.0:
        raise BadParams("mention_affinity must be >= 1")


class World:
    """Generated world plus the oracle helpers the tests use."""

    def __init__(self, seed: int, params: WorldParams):
        self.seed = seed
        self.params = params
        self.t0 = params.t0
        self.t1 = params.t0 + timedelta(days=params.days)
        self.launch = params.t0 + timedelta(days=params.post_days)
        self.accounts: dict[int, SimAccount] = {}
        self.tweets: dict[int, SimTweet] = {}
        self.followers_of: dict[int, list[int]] = {}
        self.friends_of: dict[int, list[int]] = {}
        self.favorites_of: dict[int, list[tuple[int, datetime]]] = {}
        self.suspension_at: dict[int, datetime] = {}
        self.seed_ids: list[int] = []
        self.malicious_ids: list[int] = []
        self.covered_ids: set[int] = set()
        self._timeline_ids: dict[int, list[int]] = {}
        self._timeline_times: dict[int, list[datetime]] = {}
        self._hashtag_index: dict[str, list[int]] = {}
        self._generate(_Rng(seed))

    # -- generation ---------------------------------------------------------

    def _generate(self, rng: _Rng) -> None:
        self._make_accounts(rng)
        self._make_edges(rng)
        self._schedule_suspensions(rng)
        raw = self._make_tweets(rng)
        self._assign_ids_and_plant(rng, raw)
        self._make_favorites(rng)
        for account in self.accounts.values():
            account.statuses_count = len(self._timeline_ids[account.id])
            account.favourites_count = len(self.favorites_of[account.id])
            account.followers_count = len(self.followers_of[account.id]) \
                or rng.randint(20, 5000)
            account.friends_count = len(self.friends_of[account.id]) \
                or rng.randint(10, 900)

    def _make_accounts(self, rng: _Rng) -> None:
        p = self.params
        n_malicious = round(p.n_accounts * p.malicious_share)
        n_troll = round(n_malicious * 0.6)
        n_fake = n_malicious - n_troll
        order = (["seed"] * p.n_seeds + ["news_org"] * p.n_news_org
                 + ["troll"] * n_troll + ["fakenews_poster"] * n_fake
                 + ["clickbait"] * p.n_clickbait)
        order += ["regular"] * (p.n_accounts - len(order))
        self.es_ids = []
        regular_ids = []
        for offset, archetype in enumerate(order):
            account_id = 101 + offset
            account = SimAccount(
                id=account_id,
                screen_name=f"user{account_id}",
                name=f"User {account_id}",
                archetype=archetype,
                lang="pt",
                created_at=self.t0 - timedelta(days=rng.randint(60, 2500)),
                description=" ".join(rng.sample(
                    TOPIC_WORDS["politica" if archetype in
                                ("troll", "fakenews_poster") else "futebol"],
                    3)),
                location=rng.choice(_LOCATIONS),
                verified=archetype in ("news_org", "seed"),
            )
            self.accounts[account_id] = account
            self.followers_of[account_id] = []
            self.friends_of[account_id] = []
            self.favorites_of[account_id] = []
            if archetype == "seed":
                self.seed_ids.append(account_id)
            if archetype in ("troll", "fakenews_poster"):
                self.malicious_ids.append(account_id)
            if archetype == "regular":
                regular_ids.append(account_id)
        if p.n_es_accounts:
            for account_id in regular_ids[-p.n_es_accounts:]:
                self.accounts[account_id].lang = "es"
                self.es_ids.append(account_id)
        non_es_regular = [a for a in regular_ids if a not in self.es_ids]
        for account_id in non_es_regular[:p.n_protected]:
            self.accounts[account_id].protected = True
        self._malicious_set = set(self.malicious_ids)
        self._es_set = set(self.es_ids)
        # organic mentions and references never involve "es" accounts:
        # their discovery comes only from planted mentions, kept below the
        # promotion threshold so the language-rejection path is exercised
        self._mention_pool = [a for a in self.accounts
                              if a not in self._es_set]

    def _make_edges(self, rng: _Rng) -> None:
        p = self.params
        for account_id, account in self.accounts.items():
            if account.archetype == "seed" or account.lang == "es":
                continue
            for seed_id in self.seed_ids:
                if rng.chance(p.follow_prob):
                    self.followers_of[seed_id].append(account_id)
        candidates = [a for a in self.accounts if a not in self.seed_ids
                      and a not in self._es_set]
        for seed_id in self.seed_ids:
            friends = [s for s in self.seed_ids if s != seed_id]
            friends += rng.sample(candidates, 25)
            self.friends_of[seed_id] = sorted(set(friends))
        self.covered_ids = set(self.seed_ids)
        for seed_id in self.seed_ids:
            self.covered_ids.update(self.followers_of[seed_id])
            self.covered_ids.update(self.friends_of[seed_id])

    def _schedule_suspensions(self, rng: _Rng) -> None:
        p = self.params
        n_suspended = round(len(self.malicious_ids) * p.suspended_share)
        window_start = self.launch + timedelta(hours=26)
        for account_id in self.malicious_ids[:n_suspended]:
            at = window_start + timedelta(hours=14 * rng.uniform())
            self.suspension_at[account_id] = at
            self.accounts[account_id].suspended_at = at

    def _quiet_from(self, account_id: int) -> Optional[datetime]:
        at = self.suspension_at.get(account_id)
        return None if at is None else at - timedelta(days=2)

    def _topic_mixture(self, rng: _Rng, archetype: str) -> list:
        if archetype in ("troll", "fakenews_poster", "clickbait"):
            return [0.80, 0.10, 0.10]
        if archetype in ("news_org", "seed"):
            return [0.45, 0.25, 0.30]
        if rng.chance(0.5):
            return [0.10, 0.70, 0.20]
        return [0.10, 0.20, 0.70]

    def _tweet_words(self, rng: _Rng, mixture) -> list:
        topics = list(TOPIC_WORDS)
        words = []
        for _ in range(rng.randint(6, 12)):
            topic = topics[rng.weighted_index(mixture)]
            words.append(rng.choice(TOPIC_WORDS[topic]))
        for _ in range(rng.randint(2, 4)):
            words.insert(rng.randint(0, len(words) - 1),
                         rng.choice(_GLUE_WORDS))
        return words

    def _pick_hashtags(self, rng: _Rng, archetype: str) -> list:
        count = rng.weighted_index([0.35, 0.35, 0.2, 0.1])
        political = archetype in ("troll", "fakenews_poster", "clickbait")
        tags = []
        for _ in range(count):
            pool = POLITICAL_TAGS if rng.chance(0.8 if political else 0.25) \
                else NEUTRAL_TAGS
            tag = rng.choice(pool)
            if tag not in tags:
                tags.append(tag)
        return tags

    def _pick_url(self, rng: _Rng, archetype: str) -> Optional[str]:
        p = self.params
        if archetype == "fakenews_poster" and rng.chance(0.5):
            return f"https://{rng.choice(p.fake_domains)}/" \
                   f"artigo/{rng.randint(100, 999)}"
        if archetype == "troll" and rng.chance(0.2):
            return f"https://{rng.choice(p.fake_domains)}/" \
                   f"artigo/{rng.randint(100, 999)}"
        if archetype == "clickbait" and rng.chance(0.6):
            return f"https://{rng.choice(CLICKBAIT_DOMAINS)}/" \
                   f"post/{rng.randint(100, 999)}"
        if archetype in ("news_org", "seed") and rng.chance(0.5):
            return f"https://{rng.choice(NEWS_DOMAINS)}/" \
                   f"noticia/{rng.randint(1000, 9999)}"
        if rng.chance(0.08):
            return f"https://{rng.choice(NEWS_DOMAINS)}/" \
                   f"noticia/{rng.randint(1000, 9999)}"
        return None

    def _pick_mention(self, rng: _Rng, author_id: int) -> int:
        affinity = self.params.mention_affinity
        malicious = author_id in self._malicious_set
        if malicious and rng.chance(affinity / (affinity + 1.0)):
            target = rng.choice(self.malicious_ids)
            if target != author_id:
                return target
        while True:
            target = rng.choice(self._mention_pool)
            if target != author_id:
                return target

    def _make_tweets(self, rng: _Rng) -> list:
        p = self.params
        mega_id = 101 + p.n_seeds if (p.mega_poster and p.n_news_org) \
            else None
        mixtures = {a: self._topic_mixture(rng, acc.archetype)
                    for a, acc in self.accounts.items()}
        raw: list[SimTweet] = []
        recent: list[SimTweet] = []
        recent_malicious: list[SimTweet] = []
        for day in range(p.post_days):
            day_start = self.t0 + timedelta(days=day)
            for account_id in sorted(self.accounts):
                account = self.accounts[account_id]
                rate = 62.0 if account_id == mega_id \
                    else p.daily_rates[account.archetype]
                count = rng.poisson(rate)
                quiet = self._quiet_from(account_id)
                for _ in range(count):
                    at = day_start + timedelta(
                        seconds=int(rng.uniform() * 86400))
                    if quiet is not None and at >= quiet:
                        continue
                    tweet = self._make_tweet(rng, account, at, mixtures,
                                             recent, recent_malicious)
                    raw.append(tweet)
                    # es tweets are never referenced (kept undiscoverable)
                    if account_id not in self._es_set:
                        recent.append(tweet)
                        if account_id in self._malicious_set:
                            recent_malicious.append(tweet)
                    if len(recent) > 600:
                        del recent[:200]
                    if len(recent_malicious) > 300:
                        del recent_malicious[:100]
        if mega_id is not None:
            total = sum(1 for t in raw if t.author_id == mega_id)
            filler_day = self.t0 + timedelta(days=p.post_days - 1)
            step = 0
            while total <= 3250:
                at = filler_day + timedelta(seconds=43200 + step)
                raw.append(self._make_tweet(rng, self.accounts[mega_id], at,
                                            mixtures, [], []))
                step += 9
                total += 1
        return raw

    def _pick_reference(self, rng: _Rng, account: SimAccount, at: datetime,
                        recent, recent_malicious) -> Optional[SimTweet]:
        affinity = self.params.mention_affinity
        pool = recent
        if account.id in self._malicious_set and recent_malicious \
                and rng.chance(affinity / (affinity + 1.0)):
            pool = recent_malicious
        for _ in range(8):
            candidate = pool[rng.randint(max(0, len(pool) - 400),
                                         len(pool) - 1)]
            if (candidate.created_at < at
                    and candidate.author_id != account.id
                    and candidate.kind != "retweet"):
                return candidate
        return None

    def _make_tweet(self, rng: _Rng, account: SimAccount, at: datetime,
                    mixtures, recent, recent_malicious) -> SimTweet:
        weights = _KIND_MIX[account.archetype]
        kind = ("original", "retweet", "reply", "quote")[
            rng.weighted_index(list(weights))]
        reference = None
        if kind != "original" and recent:
            reference = self._pick_reference(rng, account, at, recent,
                                             recent_malicious)
        if reference is None:
            kind = "original"
        words = self._tweet_words(rng, mixtures[account.id])
        hashtags = self._pick_hashtags(rng, account.archetype)
        url = self._pick_url(rng, account.archetype)
        mentions: list[int] = []
        if kind in ("reply", "quote", "retweet"):
            mentions.append(reference.author_id)
        for _ in range(rng.weighted_index([0.5, 0.3, 0.2])):
            target = self._pick_mention(rng, account.id)
            if target not in mentions:
                mentions.append(target)
        lang = account.lang
        if lang == "pt" and rng.chance(0.07):
            lang = "und"
        parts = list(words)
        parts.extend("#" + tag for tag in hashtags)
        parts.extend("@" + self.accounts[m].screen_name for m in mentions)
        if url:
            parts.append(url)
        text = " ".join(parts)
        if kind == "retweet":
            # retweets inherit the original's entities plus its author
            text = f"RT @{self.accounts[reference.author_id].screen_name}: " \
                   f"{reference.text}"[:280]
            hashtags = list(reference.hashtags)
            mentions = [reference.author_id] + [
                m for m in reference.mentions if m != reference.author_id]
            return SimTweet(
                id=0, author_id=account.id, created_at=at, text=text,
                lang=lang, kind=kind, hashtags=hashtags, mentions=mentions,
                urls=list(reference.urls), ref_tweet_id=id(reference),
                ref_author_id=reference.author_id)
        if kind == "reply":
            text = f"@{self.accounts[reference.author_id].screen_name} " \
                   + text
        return SimTweet(
            id=0, author_id=account.id, created_at=at, text=text, lang=lang,
            kind=kind, hashtags=hashtags, mentions=mentions,
            urls=[url] if url else [],
            ref_tweet_id=None if reference is None else id(reference),
            ref_author_id=None if reference is None else reference.author_id)

    def _assign_ids_and_plant(self, rng: _Rng, raw: list) -> None:
        p = self.params
        raw.sort(key=lambda t: (t.created_at, t.author_id, t.text))
        by_object_id = {}
        for index, tweet in enumerate(raw):
            tweet.id = 10_000_000 + index * 7
            by_object_id[id(tweet)] = tweet.id
        for tweet in raw:
            if tweet.ref_tweet_id is not None:
                tweet.ref_tweet_id = by_object_id.get(tweet.ref_tweet_id)
                if tweet.ref_tweet_id is None:
                    tweet.kind = "original"
                    tweet.ref_author_id = None
        # guarantee every fakenews poster shared at least one fake domain
        for account_id in self.malicious_ids:
            if self.accounts[account_id].archetype != "fakenews_poster":
                continue
            mine = [t for t in raw if t.author_id == account_id]
            if not mine:
                continue
            if not any(any(d in u for d in p.fake_domains)
                       for t in mine for u in t.urls):
                target = mine[0]
                url = f"https://{p.fake_domains[0]}/artigo/1"
                target.urls.append(url)
                target.text += " " + url
        # plant mentions so uncovered accounts are discoverable; non-seed
        # authors only, so discovery goes via the appearance-count path
        eligible = [t for t in raw if t.author_id in self.covered_ids
                    and t.author_id not in self.seed_ids
                    and t.kind in ("original", "reply")
                    and t.created_at < self.launch - timedelta(days=1)]
        for account_id in sorted(set(self.accounts) - self.covered_ids):
            account = self.accounts[account_id]
            need = 2 if account.lang == "es" else 5
            for tweet in rng.sample(eligible, need):
                if account_id not in tweet.mentions:
                    tweet.mentions.append(account_id)
                    tweet.text += f" @{account.screen_name}"
        self._timeline_ids = {a: [] for a in self.accounts}
        self._timeline_times = {a: [] for a in self.accounts}
        for tweet in raw:
            self.tweets[tweet.id] = tweet
            self._timeline_ids[tweet.author_id].append(tweet.id)
            self._timeline_times[tweet.author_id].append(tweet.created_at)
        for tweet in raw:
            for tag in tweet.hashtags:
                self._hashtag_index.setdefault(tag.lower(), []).append(
                    tweet.id)

    def _make_favorites(self, rng: _Rng) -> None:
        # es-authored tweets stay out of every discovery channel, and
        # nobody favorites posts already beyond the 3,200 reachability
        # horizon (collection could otherwise see more than the cap)
        unreachable: set[int] = set()
        for ids in self._timeline_ids.values():
            if len(ids) > 3200:
                unreachable.update(ids[:-3200])
        all_ids = sorted(i for i, t in self.tweets.items()
                         if t.author_id not in self._es_set
                         and i not in unreachable)
        if not all_ids:
            return
        for account_id in sorted(self.accounts):
            count = rng.randint(10, 40)
            picked: set[int] = set()
            for _ in range(count):
                tweet_id = rng.choice(all_ids)
                tweet = self.tweets[tweet_id]
                if tweet.author_id == account_id or tweet_id in picked:
                    continue
                picked.add(tweet_id)
                event = tweet.created_at + timedelta(
                    seconds=int(rng.uniform() * 72000))
                self.favorites_of[account_id].append((tweet_id, event))
            self.favorites_of[account_id].sort()

    # -- oracle helpers ------------------------------------------------------

    def is_suspended(self, account_id: int, now: datetime) -> bool:
        at = self.suspension_at.get(account_id)
        return at is not None and now >= at

    def visible_timeline(self, account_id: int, now: datetime) -> list:
        """Tweet ids visible at `now`, newest first, before the 3,200 cap."""
        times = self._timeline_times[account_id]
        ids = self._timeline_ids[account_id]
        visible = [i for i, at in zip(ids, times) if at <= now]
        visible.reverse()
        return visible

    def reachable_timeline(self, account_id: int, now: datetime) -> list:
        return self.visible_timeline(account_id, now)[:3200]

    def visible_favorites(self, account_id: int, now: datetime) -> list:
        out = [tweet_id for tweet_id, event in self.favorites_of[account_id]
               if event <= now and self.tweets[tweet_id].created_at <= now]
        out.sort(reverse=True)
        return out

    def search_hashtag(self, tag: str, lang: Optional[str],
                       now: datetime) -> list:
        horizon = now - timedelta(days=7)
        out = []
        for tweet_id in self._hashtag_index.get(tag.lower(), ()):
            tweet = self.tweets[tweet_id]
            if not horizon < tweet.created_at <= now:
                continue
            if lang is not None and tweet.lang != lang:
                continue
            out.append(tweet_id)
        out.sort(reverse=True)
        return out

    def per_day_counts(self) -> dict:
        counts: dict[str, dict[str, int]] = {}
        for tweet in self.tweets.values():
            day = tweet.created_at.date().isoformat()
            bucket = counts.setdefault(day, {})
            bucket[tweet.kind] = bucket.get(tweet.kind, 0) + 1
        return counts

    def ground_truth(self) -> dict:
        fake_sharers = sorted({
            t.author_id for t in self.tweets.values()
            if any(any(d in u for d in self.params.fake_domains)
                   for u in t.urls)})
        return {
            "rng_seed": self.seed,
            "t0": iso(self.t0),
            "t1": iso(self.t1),
            "launch": iso(self.launch),
            "seeds": list(self.seed_ids),
            "malicious": list(self.malicious_ids),
            "planted_community": list(self.malicious_ids),
            "suspensions": [[a, iso(at)] for a, at in
                            sorted(self.suspension_at.items())],
            "fake_domain_sharers": fake_sharers,
            "covered": sorted(self.covered_ids),
            "per_day_counts": self.per_day_counts(),
            "accounts": {
                str(a): {
                    "archetype": acc.archetype,
                    "lang": acc.lang,
                    "protected": acc.protected,
                    "screen_name": acc.screen_name,
                    "suspended_at": iso(acc.suspended_at)
                    if acc.suspended_at else None,
                    "post_count": len(self._timeline_ids[a]),
                    "favorites_count": len(self.favorites_of[a]),
                    "covered": a in self.covered_ids,
                } for a, acc in sorted(self.accounts.items())},
        }


def generate_world(seed: int, params: Optional[WorldParams] = None) -> World:
    """Build a reproducible world; same (seed, params) twice is identical."""
    params = params or WorldParams()
    _validate(params)
    return World(seed, params)
