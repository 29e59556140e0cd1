"""
Per-account activity statistics and the ranked influence report
(tweets, total retweets, most retweeted tweet, followers, first time,
PageRank and estimated impact).
"""

import logging
from collections import Counter
from datetime import datetime
from typing import Optional

from pydantic import BaseModel, Field

from src.core.estimand import ImpactEstimate
from src.core.graph import CentralityVector, InfluenceGraph
from src.core.network_builder import first_narrative_times
from src.parsers.record_loader import TweetRecord

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("screen_name", "T", "TRT", "MRT", "F", "first_time", "PR", "Impact")
PAGERANK_SCALE = 1000.0


class AccountStats(BaseModel):
    vertex_id: str
    screen_name: str
    tweets: int = Field(ge=0)
    total_retweets: int = Field(ge=0)
    most_retweeted: int = Field(ge=0)
    followers: Optional[int] = Field(default=None, ge=0)
    first_time: Optional[datetime] = None


class ReportRow(BaseModel):
    screen_name: str
    tweets: int = Field(ge=0)
    total_retweets: int = Field(ge=0)
    most_retweeted: int = Field(ge=0)
    followers: Optional[int] = Field(default=None, ge=0)
    first_time: Optional[datetime] = None
    pagerank: float
    impact: float
    impact_lo: float
    impact_hi: float

    def cells(self) -> list[str]:
        """Cells in REPORT_COLUMNS order."""
        return [
            self.screen_name,
            str(self.tweets),
            str(self.total_retweets),
            str(self.most_retweeted),
            "" if self.followers is None else str(self.followers),
            "" if self.first_time is None else self.first_time.strftime("%Y-%m-%dT%H:%M:%SZ"),
            f"{self.pagerank * PAGERANK_SCALE:.2f}",
            f"{self.impact:.2f}",
        ]


def account_statistics(records: list[TweetRecord], g: InfluenceGraph) -> list[AccountStats]:
    """Activity statistics for every vertex, in graph order."""
    first_time = first_narrative_times(records)
    tweets = Counter(r.user_id for r in records)
    retweets_received = Counter()
    per_tweet = Counter()
    screen_names: dict[str, str] = {}
    followers: dict[str, int] = {}

    for r in records:
        if r.screen_name:
            screen_names.setdefault(r.user_id, r.screen_name)
        if r.followers_count is not None:
            followers[r.user_id] = max(followers.get(r.user_id, 0), r.followers_count)
        if r.retweet_of is not None:
            retweets_received[r.retweet_of.user_id] += 1
            per_tweet[(r.retweet_of.user_id, r.retweet_of.tweet_id)] += 1

    most_retweeted = Counter()
    for (user_id, _), count in per_tweet.items():
        most_retweeted[user_id] = max(most_retweeted[user_id], count)

    return [
        AccountStats(
            vertex_id=vid,
            screen_name=screen_names.get(vid, vid),
            tweets=tweets[vid],
            total_retweets=retweets_received[vid],
            most_retweeted=most_retweeted[vid],
            followers=followers.get(vid),
            first_time=first_time.get(vid),
        )
        for vid in g.vertex_ids
    ]


def build_report(
    impacts: list[ImpactEstimate],
    stats: list[AccountStats],
    g: InfluenceGraph,
    centrality: CentralityVector,
) -> list[ReportRow]:
    """Join ranked impacts with account statistics; keeps the impact ranking."""
    by_vertex = {s.vertex_id: s for s in stats}
    rows = []
    for estimate in impacts:
        account = by_vertex.get(estimate.vertex_id)
        if account is None:
            logger.warning(f"No account statistics for {estimate.vertex_id}")
            account = AccountStats(
                vertex_id=estimate.vertex_id, screen_name=estimate.vertex_id,
                tweets=0, total_retweets=0, most_retweeted=0,
            )
        rows.append(
            ReportRow(
                screen_name=account.screen_name,
                tweets=account.tweets,
                total_retweets=account.total_retweets,
                most_retweeted=account.most_retweeted,
                followers=account.followers,
                first_time=account.first_time,
                pagerank=float(centrality.scores[g.index[estimate.vertex_id]]),
                impact=estimate.zeta_mean,
                impact_lo=estimate.zeta_lo,
                impact_hi=estimate.zeta_hi,
            )
        )
    return rows
