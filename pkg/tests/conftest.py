from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from src.core.graph import build_influence_graph
from src.parsers.record_loader import RetweetRef, TweetRecord

T0 = datetime(2017, 5, 5, 18, 0, tzinfo=timezone.utc)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def make_record():
    """Factory for TweetRecord fixtures; minutes are offsets from 2017-05-05T18:00Z."""

    def make(tweet_id, user_id, minutes=0, text="", hashtags=(), lang="en",
             retweet_of=None, screen_name=None, followers=None):
        return TweetRecord(
            tweet_id=tweet_id,
            created_at=T0 + timedelta(minutes=minutes),
            user_id=user_id,
            screen_name=screen_name or user_id,
            text=text,
            lang=lang,
            hashtags=list(hashtags),
            followers_count=followers,
            retweet_of=RetweetRef(user_id=retweet_of[0], tweet_id=retweet_of[1]) if retweet_of else None,
        )

    return make


@pytest.fixture
def chain_graph():
    """a -> b (weight 2), b -> c (weight 1)."""
    return build_influence_graph([("a", "b", 2.0), ("b", "c", 1.0)])


def random_graph(rng: np.random.Generator, n: int, density: float = 0.2, integer: bool = False):
    ids = [f"v{i:02d}" for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                weight = float(rng.integers(1, 4)) if integer else float(rng.uniform(0.1, 1.0))
                edges.append((ids[i], ids[j], weight))
    return build_influence_graph(edges, vertices=ids)
