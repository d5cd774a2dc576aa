"""World generator determinism and the mock platform API contract."""

import json
from datetime import timedelta
from urllib.parse import urlencode

import pytest
import requests

from spherewatch.domain import classify_tweet, iso
from spherewatch.simserver import SimService
from spherewatch.simworld import BadParams, WorldParams, generate_world


SMALL = WorldParams(n_accounts=60, n_seeds=3, n_news_org=1, n_clickbait=4,
                    malicious_share=0.10, n_es_accounts=2, days=20,
                    post_days=18)


@pytest.fixture(scope="module")
def world():
    return generate_world(7, SMALL)


@pytest.fixture(scope="module")
def service(world):
    svc = SimService(world)
    svc.start()
    yield svc
    svc.stop()


def get(service, path, **params):
    url = f"{service.base_url}{path}"
    if params:
        url += "?" + urlencode(params)
    return requests.get(url, timeout=10)


class TestWorldGeneration:
    def test_same_inputs_same_world(self):
        first = generate_world(7, SMALL)
        second = generate_world(7, SMALL)
        assert first.ground_truth() == second.ground_truth()
        assert [(t.id, t.text) for t in first.tweets.values()] == \
               [(t.id, t.text) for t in second.tweets.values()]

    def test_different_seed_differs(self, world):
        other = generate_world(8, SMALL)
        assert other.ground_truth() != world.ground_truth()

    def test_zero_malicious(self):
        params = WorldParams(n_accounts=40, n_seeds=2, n_news_org=1,
                             n_clickbait=2, malicious_share=0.0,
                             n_es_accounts=0, days=12, post_days=10)
        w = generate_world(1, params)
        assert w.malicious_ids == []
        assert w.suspension_at == {}

    def test_malicious_share_arithmetic(self):
        w = generate_world(3, WorldParams(malicious_share=0.05))
        assert len(w.malicious_ids) == 25

    def test_bad_params_rejected(self):
        with pytest.raises(BadParams):
            generate_world(1, WorldParams(n_accounts=10, n_seeds=0))
        with pytest.raises(BadParams):
            generate_world(1, WorldParams(follow_prob=0.0))
        with pytest.raises(BadParams):
            generate_world(1, WorldParams(days=30, post_days=29))
        with pytest.raises(BadParams):
            generate_world(1, WorldParams(n_accounts=10, n_seeds=2,
                                          n_news_org=5, n_clickbait=5))
        with pytest.raises(BadParams):
            generate_world(1, WorldParams(malicious_share=1.5))

    def test_suspensions_inside_world_span(self, world):
        for at in world.suspension_at.values():
            assert world.t0 <= at <= world.t1
            assert at >= world.launch + timedelta(hours=26)

    def test_fakenews_posters_share_fake_domains(self, world):
        truth = world.ground_truth()
        posters = {int(a) for a, info in truth["accounts"].items()
                   if info["archetype"] == "fakenews_poster"}
        assert posters <= set(truth["fake_domain_sharers"])

    def test_everyone_discoverable(self, world):
        mentioned = set()
        for tweet in world.tweets.values():
            mentioned.update(tweet.mentions)
        for account_id in world.accounts:
            assert account_id in world.covered_ids \
                or account_id in mentioned

    def test_per_day_counts_sum(self, world):
        total = sum(n for day in world.per_day_counts().values()
                    for n in day.values())
        assert total == len(world.tweets)

    def test_mega_poster_exceeds_cap(self, world):
        mega = 101 + world.params.n_seeds
        assert len(world._timeline_ids[mega]) > 3200
        assert len(world.reachable_timeline(mega, world.launch)) == 3200


class TestRelationEndpoints:
    def test_followers_paged(self, service, world):
        seed = world.seed_ids[0]
        truth = world.followers_of[seed]
        assert len(truth) >= 7
        collected = []
        cursor = -1
        pages = 0
        while True:
            resp = get(service, "/1.1/followers/ids.json",
                       user_id=seed, cursor=cursor, count=5)
            assert resp.status_code == 200
            body = resp.json()
            collected.extend(body["ids"])
            pages += 1
            cursor = body["next_cursor"]
            if cursor == 0:
                break
        assert collected == truth
        assert pages == (len(truth) + 4) // 5

    def test_friends_empty_for_leaf(self, service, world):
        leaf = next(a for a in world.accounts
                    if not world.friends_of[a]
                    and not world.accounts[a].protected
                    and a not in world.suspension_at)
        resp = get(service, "/1.1/friends/ids.json", user_id=leaf)
        assert resp.status_code == 200
        assert resp.json() == {"ids": [], "next_cursor": 0,
                               "next_cursor_str": "0",
                               "previous_cursor": 0,
                               "previous_cursor_str": "0"}

    def test_unknown_user(self, service):
        resp = get(service, "/1.1/followers/ids.json", user_id=999999)
        assert resp.status_code == 404
        assert resp.json()["errors"][0]["code"] == 50


class TestLookup:
    def test_multi_lookup(self, service, world):
        ids = list(world.accounts)[:3]
        resp = get(service, "/1.1/users/lookup.json",
                   user_id=",".join(map(str, ids)))
        assert resp.status_code == 200
        body = resp.json()
        assert [u["id"] for u in body] == ids
        assert body[0]["screen_name"] == world.accounts[ids[0]].screen_name
        record_fields = {"followers_count", "statuses_count", "created_at",
                         "verified", "protected"}
        assert record_fields <= set(body[0])

    def test_lookup_by_screen_name(self, service, world):
        seed = world.seed_ids[0]
        name = world.accounts[seed].screen_name
        resp = get(service, "/1.1/users/lookup.json", screen_name=name)
        assert resp.status_code == 200
        assert resp.json()[0]["id"] == seed

    def test_single_unknown_id_reports_code_50(self, service):
        resp = get(service, "/1.1/users/lookup.json", user_id="424242")
        assert resp.status_code == 404
        assert resp.json()["errors"][0]["code"] == 50

    def test_too_many_terms(self, service):
        ids = ",".join(str(1000 + i) for i in range(101))
        resp = get(service, "/1.1/users/lookup.json", user_id=ids)
        assert resp.status_code == 400
        assert resp.json()["errors"][0]["code"] == 18


class TestTimelineAndCausality:
    def test_timeline_respects_clock(self, service, world):
        account_id = world.seed_ids[0]
        mid = world.t0 + timedelta(days=9)
        service.set_clock(mid)
        resp = get(service, "/1.1/statuses/user_timeline.json",
                   user_id=account_id, count=200)
        assert resp.status_code == 200
        got = [t["id"] for t in resp.json()]
        assert got == world.visible_timeline(account_id, mid)[:200]

    def test_paged_walk_no_duplicates(self, service, world):
        service.set_clock(world.launch)
        account_id = world.seed_ids[1]
        seen = []
        max_id = None
        while True:
            params = {"user_id": account_id, "count": 10}
            if max_id is not None:
                params["max_id"] = max_id
            page = get(service, "/1.1/statuses/user_timeline.json",
                       **params).json()
            if not page:
                break
            ids = [t["id"] for t in page]
            seen.extend(ids)
            max_id = ids[-1] - 1
        assert seen == world.reachable_timeline(account_id, world.launch)
        assert len(seen) == len(set(seen))

    def test_since_id_strictly_newer(self, service, world):
        account_id = world.seed_ids[0]
        timeline = world.reachable_timeline(account_id, world.launch)
        pivot = timeline[len(timeline) // 2]
        resp = get(service, "/1.1/statuses/user_timeline.json",
                   user_id=account_id, since_id=pivot, count=200)
        got = [t["id"] for t in resp.json()]
        assert got == [i for i in timeline if i > pivot][:200]

    def test_cap_at_3200(self, service, world):
        mega = 101 + world.params.n_seeds
        seen = 0
        max_id = None
        while True:
            params = {"user_id": mega, "count": 200}
            if max_id is not None:
                params["max_id"] = max_id
            page = get(service, "/1.1/statuses/user_timeline.json",
                       **params).json()
            if not page:
                break
            seen += len(page)
            max_id = page[-1]["id"] - 1
        assert seen == 3200

    def test_wire_tweets_classify(self, service, world):
        service.set_clock(world.launch)
        kinds_needed = {"retweet", "quote", "reply"}
        found = {}
        for account_id in world.accounts:
            for raw_id in world.reachable_timeline(account_id,
                                                   world.launch)[:50]:
                kind = world.tweets[raw_id].kind
                if kind in kinds_needed and kind not in found:
                    found[kind] = (account_id, raw_id)
            if len(found) == 3:
                break
        assert len(found) == 3
        for kind, (account_id, tweet_id) in found.items():
            page = get(service, "/1.1/statuses/user_timeline.json",
                       user_id=account_id, max_id=tweet_id, count=1).json()
            record = classify_tweet(page[0])
            assert record.kind.value == kind
            assert record.referenced_tweet_id == \
                world.tweets[tweet_id].ref_tweet_id


class TestFavoritesAndSearch:
    def test_favorites_match_oracle(self, service, world):
        service.set_clock(world.launch)
        account_id = next(a for a in world.accounts
                          if world.favorites_of[a]
                          and not world.accounts[a].protected)
        resp = get(service, "/1.1/favorites/list.json",
                   user_id=account_id, count=200)
        got = [t["id"] for t in resp.json()]
        assert got == world.visible_favorites(account_id, world.launch)[:200]

    def test_search_seven_day_window(self, service, world):
        service.set_clock(world.launch)
        tag = next(iter(world._hashtag_index))
        resp = get(service, "/1.1/search/tweets.json", q=f"#{tag}",
                   count=100)
        body = resp.json()
        expected = world.search_hashtag(tag, None, world.launch)[:100]
        assert [t["id"] for t in body["statuses"]] == expected
        horizon = world.launch - timedelta(days=7)
        for status in body["statuses"]:
            tweet = world.tweets[status["id"]]
            assert horizon < tweet.created_at <= world.launch

    def test_search_language_filter(self, service, world):
        service.set_clock(world.launch)
        tag = next(iter(world._hashtag_index))
        resp = get(service, "/1.1/search/tweets.json", q=f"#{tag}",
                   lang="pt", count=100)
        got = [t["id"] for t in resp.json()["statuses"]]
        assert got == world.search_hashtag(tag, "pt", world.launch)[:100]
        assert all(t["lang"] == "pt" for t in resp.json()["statuses"])


class TestSuspensionSchedule:
    def test_suspension_flips_responses(self, world):
        svc = SimService(world)
        svc.start()
        try:
            account_id, at = sorted(world.suspension_at.items())[0]
            svc.set_clock(at - timedelta(hours=1))
            ok = get(svc, "/1.1/statuses/user_timeline.json",
                     user_id=account_id)
            assert ok.status_code == 200
            svc.set_clock(at)
            gone = get(svc, "/1.1/statuses/user_timeline.json",
                       user_id=account_id)
            assert gone.status_code == 403
            assert gone.json()["errors"][0]["code"] == 63
            single = get(svc, "/1.1/users/lookup.json", user_id=account_id)
            assert single.status_code == 403
            assert single.json()["errors"][0]["code"] == 63
            other = next(a for a in world.accounts
                         if a not in world.suspension_at)
            multi = get(svc, "/1.1/users/lookup.json",
                        user_id=f"{account_id},{other}")
            assert multi.status_code == 200
            assert [u["id"] for u in multi.json()] == [other]
        finally:
            svc.stop()


class TestClockAndBudgets:
    def test_clock_rejects_rewind(self, service, world):
        resp = requests.post(f"{service.base_url}/__sim/clock",
                             data=json.dumps({"now": iso(world.t0)}),
                             timeout=10)
        assert resp.status_code == 400
        assert resp.json()["error"] == "ClockBackwards"

    def test_clock_noop_advance(self, service):
        now = service.now
        resp = requests.post(f"{service.base_url}/__sim/clock",
                             data=json.dumps({"now": iso(now)}),
                             timeout=10)
        assert resp.status_code == 200
        assert service.now == now

    def test_budget_enforced_per_window_and_credential(self, world):
        svc = SimService(world, budgets={"followers": 2, "friends": 15,
                                         "lookup": 300, "timeline": 900,
                                         "favorites": 75, "search": 180})
        svc.start()
        try:
            seed = world.seed_ids[0]
            url = f"{svc.base_url}/1.1/followers/ids.json?user_id={seed}"
            headers = {"Authorization": "Bearer cred-a"}
            assert requests.get(url, headers=headers,
                                timeout=10).status_code == 200
            assert requests.get(url, headers=headers,
                                timeout=10).status_code == 200
            blocked = requests.get(url, headers=headers, timeout=10)
            assert blocked.status_code == 429
            assert blocked.json()["errors"][0]["code"] == 88
            assert "x-rate-limit-reset" in blocked.headers
            other = requests.get(url, headers={"Authorization": "cred-b"},
                                 timeout=10)
            assert other.status_code == 200
            svc.set_clock(svc.now + timedelta(seconds=900))
            again = requests.get(url, headers=headers, timeout=10)
            assert again.status_code == 200
            log = requests.get(f"{svc.base_url}/__sim/requests",
                               timeout=10).json()["requests"]
            per_window = {}
            for row in log:
                if row["status"] == 429:
                    continue
                key = (row["credential"], row["endpoint"], row["window"])
                per_window[key] = per_window.get(key, 0) + 1
            assert all(n <= 2 for n in per_window.values())
        finally:
            svc.stop()

    def test_ground_truth_endpoint(self, service, world):
        body = get(service, "/__sim/ground_truth").json()
        assert body == world.ground_truth()
        assert len(body["malicious"]) == len(world.malicious_ids)
