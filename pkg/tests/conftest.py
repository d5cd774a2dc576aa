"""Shared fixtures: wire-shaped object builders and small worlds."""

from datetime import datetime, timedelta, timezone

import pytest

from spherewatch.domain import format_wire_timestamp

T0 = datetime(2019, 8, 1, tzinfo=timezone.utc)


def wire_user(user_id, screen_name=None, **overrides):
    raw = {
        "id": user_id,
        "id_str": str(user_id),
        "screen_name": screen_name or f"user{user_id}",
        "name": f"User {user_id}",
        "created_at": format_wire_timestamp(T0 - timedelta(days=400)),
        "description": "",
        "location": "",
        "url": None,
        "followers_count": 10,
        "friends_count": 10,
        "statuses_count": 100,
        "favourites_count": 5,
        "verified": False,
    }
    raw.update(overrides)
    return raw


def wire_tweet(tweet_id, author_id, created_at=None, text="hello world",
               lang="pt", hashtags=(), mentions=(), urls=(), **overrides):
    raw = {
        "id": tweet_id,
        "id_str": str(tweet_id),
        "user": {"id": author_id},
        "created_at": format_wire_timestamp(created_at or T0),
        "full_text": text,
        "lang": lang,
        "entities": {
            "hashtags": [{"text": tag} for tag in hashtags],
            "user_mentions": [{"id": m} for m in mentions],
            "urls": [{"expanded_url": u} for u in urls],
        },
    }
    raw.update(overrides)
    return raw


@pytest.fixture
def t0():
    return T0
