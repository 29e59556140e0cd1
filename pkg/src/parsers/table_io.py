"""
CSV formats exchanged between pipeline stages.

Writers return bytes so that commands can stage every output before
committing any of them. Floats use Python's shortest round-trip repr.
"""

import csv
import io
import logging
import os
from datetime import datetime
from typing import Iterable, Optional, Sequence

import numpy as np

from src.core.errors import InputDataError
from src.core.estimand import ImpactEstimate
from src.core.graph import InfluenceGraph, SourceVector, build_influence_graph
from src.core.inference import PosteriorSamples
from src.core.network_builder import CovariateMatrix, OutcomeVector
from src.core.outcome_model import NetworkData, parameter_names
from src.core.report import REPORT_COLUMNS, AccountStats, ReportRow

logger = logging.getLogger(__name__)

EDGES_FILE = "edges.csv"
COVARIATES_FILE = "covariates.csv"
OUTCOMES_FILE = "outcomes.csv"
SOURCES_FILE = "sources.csv"
ACCOUNTS_FILE = "accounts.csv"


def _fmt(value: float) -> str:
    return repr(float(value))


def _to_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def _read_rows(path: str, required: Sequence[str]) -> list[dict[str, str]]:
    if not os.path.isfile(path):
        raise InputDataError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise InputDataError(f"{path} is missing column(s): {', '.join(missing)}")
        return list(reader)


def edges_csv(g: InfluenceGraph) -> bytes:
    return _to_bytes(("src", "dst", "weight"), ((s, d, _fmt(w)) for s, d, w in g.edges()))


def read_edges(path: str, vertices: Optional[Sequence[str]] = None) -> InfluenceGraph:
    rows = _read_rows(path, ("src", "dst", "weight"))
    try:
        edges = [(r["src"], r["dst"], float(r["weight"])) for r in rows]
    except (TypeError, ValueError) as e:
        raise InputDataError(f"Invalid weight in {path}: {e}") from e
    return build_influence_graph(edges, vertices=vertices)


def covariates_csv(g: InfluenceGraph, x: CovariateMatrix) -> bytes:
    return _to_bytes(
        ("vertex_id", *x.column_names),
        ((vid, *(_fmt(v) for v in row)) for vid, row in zip(g.vertex_ids, x.x)),
    )


def read_covariates(path: str) -> tuple[list[str], CovariateMatrix]:
    if not os.path.isfile(path):
        raise InputDataError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "vertex_id" or len(header) < 2:
            raise InputDataError(f"{path} needs a header vertex_id,<covariates...>")
        ids, values = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputDataError(f"{path} line {line_no} has {len(row)} field(s), expected {len(header)}")
            ids.append(row[0])
            try:
                values.append([float(v) for v in row[1:]])
            except ValueError as e:
                raise InputDataError(f"Invalid covariate in {path}: {e}") from e
    x = np.array(values, dtype=float).reshape(len(ids), len(header) - 1)
    return ids, CovariateMatrix(x=x, column_names=tuple(header[1:]))


def outcomes_csv(g: InfluenceGraph, y: OutcomeVector) -> bytes:
    return _to_bytes(("vertex_id", "y"), zip(g.vertex_ids, (int(v) for v in y.y)))


def sources_csv(g: InfluenceGraph, z: SourceVector) -> bytes:
    return _to_bytes(("vertex_id", "z"), zip(g.vertex_ids, (int(v) for v in z.z)))


def _aligned(path: str, column: str, ids: Sequence[str]) -> np.ndarray:
    rows = _read_rows(path, ("vertex_id", column))
    values = {r["vertex_id"]: r[column] for r in rows}
    missing = [vid for vid in ids if vid not in values]
    if missing or len(values) != len(ids):
        raise InputDataError(f"{path} does not cover the same vertices as the covariates")
    try:
        return np.array([float(values[vid]) for vid in ids])
    except (TypeError, ValueError) as e:
        raise InputDataError(f"Invalid value in {path}: {e}") from e


def read_network_data(data_dir: str) -> NetworkData:
    """Load the ingest outputs of a data directory; covariates fix vertex order."""
    ids, x = read_covariates(os.path.join(data_dir, COVARIATES_FILE))
    g = read_edges(os.path.join(data_dir, EDGES_FILE), vertices=ids)
    if g.n_vertices != len(ids):
        raise InputDataError("edges.csv references vertices absent from covariates.csv")
    y = OutcomeVector(_aligned(os.path.join(data_dir, OUTCOMES_FILE), "y", ids))
    z = SourceVector(_aligned(os.path.join(data_dir, SOURCES_FILE), "z", ids))
    logger.info(f"Loaded {g.n_vertices} vertices, {g.edge_count} edges and {x.n_covariates} covariate(s) from {data_dir}")
    return NetworkData(graph=g, sources=z, covariates=x, outcomes=y)


def accounts_csv(stats: list[AccountStats]) -> bytes:
    return _to_bytes(
        ("vertex_id", "screen_name", "tweets", "total_retweets", "most_retweeted", "followers", "first_time"),
        (
            (
                s.vertex_id, s.screen_name, s.tweets, s.total_retweets, s.most_retweeted,
                "" if s.followers is None else s.followers,
                "" if s.first_time is None else s.first_time.isoformat(),
            )
            for s in stats
        ),
    )


def read_accounts(path: str) -> list[AccountStats]:
    rows = _read_rows(path, ("vertex_id", "screen_name", "tweets", "total_retweets", "most_retweeted"))
    try:
        return [_account_row(r) for r in rows]
    except (TypeError, ValueError) as e:
        raise InputDataError(f"Invalid account row in {path}: {e}") from e


def _account_row(r: dict[str, str]) -> AccountStats:
    return AccountStats(
        vertex_id=r["vertex_id"],
        screen_name=r["screen_name"],
        tweets=int(r["tweets"]),
        total_retweets=int(r["total_retweets"]),
        most_retweeted=int(r["most_retweeted"]),
        followers=int(r["followers"]) if r.get("followers") else None,
        first_time=datetime.fromisoformat(r["first_time"]) if r.get("first_time") else None,
    )


def posterior_csv(samples: PosteriorSamples) -> bytes:
    names = samples.parameter_names()
    columns = samples.by_parameter()
    rows = (
        (chain, draw, *(_fmt(columns[name][chain, draw]) for name in names))
        for chain in range(samples.n_chains)
        for draw in range(samples.draws_per_chain)
    )
    return _to_bytes(("chain", "draw", *names), rows)


def read_posterior(path: str) -> PosteriorSamples:
    if not os.path.isfile(path):
        raise InputDataError(f"Posterior file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None) or []
        rows = list(reader)
    if not rows:
        raise InputDataError(f"Posterior file {path} has no draws")

    n_hops = sum(1 for h in header if h.startswith("gamma_"))
    n_covariates = sum(1 for h in header if h.startswith("beta_"))
    expected = ["chain", "draw", *parameter_names(n_hops, n_covariates), "sigma_eps"]
    if header != expected or n_hops < 1 or n_covariates < 1:
        raise InputDataError(f"Unexpected posterior header in {path}: {header}")

    ragged = [i for i, r in enumerate(rows, start=2) if len(r) != len(header)]
    if ragged:
        raise InputDataError(f"Posterior file {path} line {ragged[0]} does not match the header")
    try:
        chains = sorted({int(r[0]) for r in rows})
        values = np.array([[float(v) for v in r[2:]] for r in rows])
    except ValueError as e:
        raise InputDataError(f"Invalid value in posterior file {path}: {e}") from e
    per_chain = len(rows) // len(chains)
    if per_chain * len(chains) != len(rows):
        raise InputDataError(f"Posterior file {path} has unequal chain lengths")
    values = values.reshape(len(chains), per_chain, -1)

    return PosteriorSamples(
        tau=values[:, :, 0],
        gamma=values[:, :, 1:1 + n_hops],
        beta=values[:, :, 1 + n_hops:1 + n_hops + n_covariates],
        mu=values[:, :, 1 + n_hops + n_covariates],
        sigma_eps=values[:, :, 2 + n_hops + n_covariates],
    )


def impact_csv(impacts: list[ImpactEstimate], screen_names: dict[str, str]) -> bytes:
    return _to_bytes(
        ("vertex_id", "screen_name", "zeta_mean", "zeta_lo", "zeta_hi", "n_draws"),
        (
            (e.vertex_id, screen_names.get(e.vertex_id, e.vertex_id),
             _fmt(e.zeta_mean), _fmt(e.zeta_lo), _fmt(e.zeta_hi), e.n_draws)
            for e in impacts
        ),
    )


def report_csv(rows: list[ReportRow]) -> bytes:
    return _to_bytes(REPORT_COLUMNS, (row.cells() for row in rows))


def exposure_csv(rows: Iterable[tuple[int, str, float]]) -> bytes:
    return _to_bytes(("hop", "vertex_id", "exposure"), ((h, v, _fmt(e)) for h, v, e in rows))
