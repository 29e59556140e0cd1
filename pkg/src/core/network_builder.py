"""
Derives the model inputs from narrative-filtered records: the retweet
influence graph, vertex covariates, outcome counts and the observed
source vector.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional

import numpy as np

from src.core.errors import InputDataError
from src.core.graph import InfluenceGraph, SourceVector, build_influence_graph, degrees
from src.parsers.record_loader import TweetRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CovariateMatrix:
    x: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.column_names):
            raise InputDataError(
                f"Covariate matrix shape {x.shape} does not match {len(self.column_names)} column names"
            )
        if x.shape[1] < 1:
            raise InputDataError("At least one covariate column is required")
        if not np.isfinite(x).all():
            raise InputDataError("Covariates must be finite")
        object.__setattr__(self, "x", x)

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class OutcomeVector:
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1 or (y < 0).any() or not np.array_equal(y, np.round(y)):
            raise InputDataError("Outcomes must be nonnegative integers")
        object.__setattr__(self, "y", y.astype(np.int64))

    def __len__(self) -> int:
        return self.y.shape[0]


def first_narrative_times(records: Iterable[TweetRecord], originals_only: bool = False) -> dict[str, datetime]:
    first: dict[str, datetime] = {}
    for r in records:
        if originals_only and r.is_retweet:
            continue
        if r.user_id not in first or r.created_at < first[r.user_id]:
            first[r.user_id] = r.created_at
    return first


def build_retweet_graph(records: list[TweetRecord]) -> tuple[InfluenceGraph, dict[str, int]]:
    """
    Build the retweet influence graph.

    Edge v_i -> v_j counts the retweets by j of i's tweets made no earlier
    than i's first narrative tweet. A retweet only counts when the tweet it
    references is among the records. Every tweeter and retweeter becomes a
    vertex, in order of first appearance.

    Returns:
        tuple: (InfluenceGraph, user_id -> position)
    """
    first_time = first_narrative_times(records)
    authors = {r.tweet_id: r.user_id for r in records}

    edges = []
    excluded = 0
    dangling = 0
    for r in records:
        if r.retweet_of is None:
            continue
        source = r.retweet_of.user_id
        if authors.get(r.retweet_of.tweet_id) != source:
            dangling += 1
            continue
        if r.created_at < first_time[source]:
            excluded += 1
            continue
        edges.append((source, r.user_id, 1.0))

    if dangling:
        logger.warning(f"Ignored {dangling} retweet(s) of tweets missing from the narrative records")
    if excluded:
        logger.warning(f"Excluded {excluded} retweet(s) timestamped before the source's first narrative tweet")

    graph = build_influence_graph(edges, vertices=list(dict.fromkeys(r.user_id for r in records)))
    logger.info(f"Retweet graph: {graph.n_vertices} accounts, {graph.edge_count} edges")
    return graph, dict(graph.index)


def _majority(counter: Counter) -> str:
    best = max(counter.values())
    return min(lang for lang, count in counter.items() if count == best)


def extract_covariates(
    records: list[TweetRecord],
    g: InfluenceGraph,
    include_language: bool = True,
) -> CovariateMatrix:
    """
    Popularity and language-community covariates.

    Column ``popularity`` is log(1 + out-degree). Each account's majority
    language is one-hot encoded against the most frequent language overall,
    which is dropped; ties go to the lexicographically smallest code.
    """
    out_degree = degrees(g).out_degree
    columns = [np.log1p(out_degree.astype(float))]
    names = ["popularity"]

    if include_language and records:
        per_account: dict[str, Counter] = defaultdict(Counter)
        for r in records:
            per_account[r.user_id][r.lang] += 1
        overall = Counter(r.lang for r in records)
        reference = _majority(overall)
        languages = sorted(lang for lang in overall if lang != reference)

        majority = {user: _majority(counts) for user, counts in per_account.items()}
        for lang in languages:
            columns.append(
                np.array([1.0 if majority.get(vid) == lang else 0.0 for vid in g.vertex_ids])
            )
            names.append(f"lang_{lang}")
        logger.info(f"Language reference category '{reference}', {len(languages)} indicator column(s)")

    return CovariateMatrix(x=np.column_stack(columns), column_names=tuple(names))


def compute_outcomes(
    records: list[TweetRecord],
    index: dict[str, int],
    include_retweets: bool = True,
) -> OutcomeVector:
    """y_i = number of narrative records authored by v_i."""
    y = np.zeros(len(index), dtype=np.int64)
    for r in records:
        if r.user_id not in index:
            raise InputDataError(f"User {r.user_id} missing from vertex index")
        if r.is_retweet and not include_retweets:
            continue
        y[index[r.user_id]] += 1
    return OutcomeVector(y)


def _resolve_account(token: str, g: InfluenceGraph, by_screen_name: dict[str, str]) -> str:
    if token in g.index:
        return token
    name = token.lstrip("@").casefold()
    if name in by_screen_name:
        return by_screen_name[name]
    raise InputDataError(f"Source account not in graph: {token}")


def infer_sources(
    records: list[TweetRecord],
    g: InfluenceGraph,
    explicit: Optional[Iterable[str]] = None,
) -> SourceVector:
    """
    Observed source vector.

    Without an explicit list, v_i is a source when it posted an original
    narrative tweet and no in-neighbour tweeted the narrative strictly
    before it. Accounts that only retweet are never sources. Explicit
    entries may be user ids or screen names (with or without '@').
    """
    if explicit is not None:
        by_screen_name = {r.screen_name.casefold(): r.user_id for r in records if r.screen_name}
        ids = [_resolve_account(token, g, by_screen_name) for token in explicit]
        return SourceVector.from_ids(g, ids)

    first_time = first_narrative_times(records)
    first_original = first_narrative_times(records, originals_only=True)
    influence_csc = g.influence.tocsc()
    z = np.zeros(g.n_vertices)
    for vid, j in g.index.items():
        if vid not in first_original:
            continue
        in_neighbours = influence_csc.indices[influence_csc.indptr[j]:influence_csc.indptr[j + 1]]
        earlier = any(
            g.vertex_ids[i] in first_time and first_time[g.vertex_ids[i]] < first_original[vid]
            for i in in_neighbours
        )
        if not earlier:
            z[j] = 1.0

    if records and not z.any():
        logger.warning("No account posted an original narrative tweet; the source vector is empty")
    logger.info(f"Inferred {int(z.sum())} narrative source(s)")
    return SourceVector(z)
