"""
Synthetic narrative datasets drawn from the outcome model.

The generated records are laid out so that ingest, run with the listed
sources and retweets excluded from the outcome, rebuilds the simulated
influence matrix and covariates on every account that shows up in the
narrative. A retweeted account that drew no narrative tweets still posts
one seed tweet for its retweeters to reference, so its observed outcome
is 1 where the model drew 0.
"""

import logging
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from src.cli.models import SimulationSettings
from src.core.errors import ConfigurationError
from src.core.graph import InfluenceGraph, SourceVector, degrees
from src.core.network_builder import CovariateMatrix, OutcomeVector
from src.core.outcome_model import (
    LatentEffects,
    ModelConfig,
    ModelParams,
    NetworkData,
    simulate_graph,
    simulate_outcomes,
)
from src.parsers.record_loader import NarrativeSpec, RetweetRef, TweetRecord

logger = logging.getLogger(__name__)

DEFAULT_TRUTH = ModelParams(tau=1.0, gamma=[0.5], beta=[0.3], mu=-0.5, sigma_eps=0.1)


@dataclass(frozen=True)
class SimulatedDataset:
    graph: InfluenceGraph
    sources: SourceVector
    covariates: CovariateMatrix
    outcomes: OutcomeVector
    latent: LatentEffects
    params: ModelParams
    records: list[TweetRecord]
    narrative: NarrativeSpec

    def network_data(self) -> NetworkData:
        return NetworkData(graph=self.graph, sources=self.sources, covariates=self.covariates, outcomes=self.outcomes)

    def source_ids(self) -> list[str]:
        return [self.graph.vertex_ids[i] for i in self.sources.source_positions()]

    def narrative_accounts(self) -> set[str]:
        """Accounts that appear in at least one narrative record."""
        accounts = set()
        for r in self.records:
            if self.narrative.hashtags[0] in r.hashtags:
                accounts.add(r.user_id)
                if r.retweet_of is not None:
                    accounts.add(r.retweet_of.user_id)
        return accounts

    def observed_outcomes(self) -> OutcomeVector:
        """Original narrative tweets per account, as ingest counts them without retweets."""
        y = np.zeros(self.graph.n_vertices, dtype=np.int64)
        for r in self.records:
            if not r.is_retweet and self.narrative.hashtags[0] in r.hashtags:
                y[self.graph.index[r.user_id]] += 1
        return OutcomeVector(y)


def popularity_covariates(g: InfluenceGraph) -> CovariateMatrix:
    """The popularity column ingest derives for a single-language dataset."""
    out_degree = degrees(g).out_degree.astype(float)
    return CovariateMatrix(x=np.log1p(out_degree)[:, None], column_names=("popularity",))


def draw_sources(n: int, fraction: float, rng: np.random.Generator) -> SourceVector:
    k = max(1, int(round(fraction * n)))
    z = np.zeros(n)
    z[rng.choice(n, size=k, replace=False)] = 1.0
    return SourceVector(z)


def _records(
    g: InfluenceGraph,
    y: OutcomeVector,
    settings: SimulationSettings,
    rng: np.random.Generator,
) -> list[TweetRecord]:
    start = settings.start
    hashtag = settings.hashtag
    followers = rng.poisson(50.0 * (1.0 + degrees(g).out_strength))
    screen_names = {vid: f"user_{vid}" for vid in g.vertex_ids}
    first_tweet: dict[str, str] = {}
    records: list[TweetRecord] = []

    for i, vid in enumerate(g.vertex_ids):
        records.append(TweetRecord(
            tweet_id=f"{vid}-off",
            created_at=start - timedelta(hours=1),
            user_id=vid,
            screen_name=screen_names[vid],
            text="Unrelated chatter",
            lang="en",
            followers_count=int(followers[i]),
        ))

    out_degree = degrees(g).out_degree
    minute = 0
    for i, vid in enumerate(g.vertex_ids):
        drawn = [f"{vid}-t{k}" for k in range(int(y.y[i]))]
        if not drawn and out_degree[i] > 0:
            drawn = [f"{vid}-seed"]
        for tweet_id in drawn:
            first_tweet.setdefault(vid, tweet_id)
            records.append(TweetRecord(
                tweet_id=tweet_id,
                created_at=start + timedelta(minutes=minute),
                user_id=vid,
                screen_name=screen_names[vid],
                text=f"Breaking #{hashtag}",
                lang="en",
                hashtags=[hashtag],
                followers_count=int(followers[i]),
            ))
            minute += 1

    # retweets share one timestamp after every original, so none precedes its source
    retweet_time = start + timedelta(minutes=minute + 60)
    for src, dst, weight in g.edges():
        original = first_tweet[src]
        for k in range(int(weight)):
            records.append(TweetRecord(
                tweet_id=f"{dst}-rt-{src}-{k}",
                created_at=retweet_time,
                user_id=dst,
                screen_name=screen_names[dst],
                text=f"RT @{screen_names[src]}: Breaking #{hashtag}",
                lang="en",
                hashtags=[hashtag],
                followers_count=int(followers[g.index[dst]]),
                retweet_of=RetweetRef(user_id=src, tweet_id=original),
            ))
    return records


def simulate_dataset(settings: SimulationSettings, params: ModelParams, seed: int) -> SimulatedDataset:
    """
    Simulate a graph, sources and outcomes, then materialise them as records.

    Args:
        settings: Graph size, degree, weights, source share and hashtag
        params: True model parameters; exactly one covariate (popularity)
        seed: Seeds graph, sources, outcomes and record metadata

    Returns:
        SimulatedDataset: Ground truth together with the raw records
    """
    if params.n_covariates != 1:
        raise ConfigurationError(
            f"Simulated data has a single popularity covariate, params carry {params.n_covariates} beta(s)"
        )

    logger.info(f"Step 1: Simulating a {settings.n}-account graph (mean out-degree {settings.mean_degree})...")
    g = simulate_graph(settings.n, settings.mean_degree, settings.weight_max, rng_seed=seed)

    logger.info("Step 2: Drawing sources and outcomes...")
    z = draw_sources(g.n_vertices, settings.source_fraction, np.random.default_rng(seed + 1))
    x = popularity_covariates(g)
    y, eps = simulate_outcomes(params, g, z, x, ModelConfig(n_hops=params.n_hops), rng_seed=seed + 2)

    logger.info("Step 3: Writing records...")
    records = _records(g, y, settings, np.random.default_rng(seed + 3))
    logger.info(f"Simulated {len(records)} records, {int(y.y.sum())} narrative tweets, {int(z.z.sum())} source(s)")

    return SimulatedDataset(
        graph=g,
        sources=z,
        covariates=x,
        outcomes=y,
        latent=eps,
        params=params,
        records=records,
        narrative=NarrativeSpec(hashtags=[settings.hashtag]),
    )

