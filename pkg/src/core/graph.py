"""
Influence graph representation: the weighted directed influence matrix,
source vectors, degree statistics and PageRank centrality.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import sparse

from src.core.errors import ConvergenceError, GraphConstructionError, InputDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InfluenceGraph:
    """Accounts and the matrix A, where a_ij is the influence of v_i on v_j."""

    vertex_ids: tuple[str, ...]
    influence: sparse.csr_matrix

    def __post_init__(self):
        n = len(self.vertex_ids)
        if self.influence.shape != (n, n):
            raise InputDataError(
                f"Influence matrix shape {self.influence.shape} does not match {n} vertices"
            )
        if len(set(self.vertex_ids)) != n:
            raise InputDataError("Vertex ids must be unique")

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def edge_count(self) -> int:
        return int((self.influence.data > 0).sum())

    @cached_property
    def index(self) -> dict[str, int]:
        return {vid: i for i, vid in enumerate(self.vertex_ids)}

    def weight(self, src: str, dst: str) -> float:
        return float(self.influence[self.index[src], self.index[dst]])

    def edges(self) -> list[tuple[str, str, float]]:
        """Positive entries of A in row-major order."""
        coo = self.influence.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (self.vertex_ids[coo.row[k]], self.vertex_ids[coo.col[k]], float(coo.data[k]))
            for k in order
            if coo.data[k] > 0
        ]


@dataclass(frozen=True)
class SourceVector:
    """Binary treatment vector Z marking narrative sources."""

    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or not np.isin(z, (0.0, 1.0)).all():
            raise InputDataError("Source vector entries must be 0 or 1")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.z.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "SourceVector":
        return cls(np.zeros(n))

    @classmethod
    def from_ids(cls, graph: InfluenceGraph, ids: Iterable[str]) -> "SourceVector":
        z = np.zeros(graph.n_vertices)
        for vid in ids:
            if vid not in graph.index:
                raise InputDataError(f"Source id not in graph: {vid}")
            z[graph.index[vid]] = 1.0
        return cls(z)

    def with_source(self, i: int) -> "SourceVector":
        """z_{i+}: entry i forced to 1."""
        z = self.z.copy()
        z[i] = 1.0
        return SourceVector(z)

    def without_source(self, i: int) -> "SourceVector":
        """z_{i-}: entry i forced to 0."""
        z = self.z.copy()
        z[i] = 0.0
        return SourceVector(z)

    def source_positions(self) -> np.ndarray:
        return np.flatnonzero(self.z)


@dataclass(frozen=True)
class CentralityVector:
    scores: np.ndarray
    damping: float
    iterations: int = 0


class DegreeStats(NamedTuple):
    out_degree: np.ndarray
    in_degree: np.ndarray
    out_strength: np.ndarray


def build_influence_graph(
    edges: Iterable[tuple[str, str, float]],
    vertices: Optional[Sequence[str]] = None,
    normalize_rows: bool = False,
) -> InfluenceGraph:
    """
    Build an InfluenceGraph from (src, dst, weight) triples.

    Vertex order is the order of ``vertices`` (when given) followed by first
    appearance over the edge stream, src before dst. Duplicate pairs are
    summed and self-loops are dropped.

    Args:
        edges: Iterable of (src_id, dst_id, weight) with weight >= 0
        vertices: Optional ids to register first, so isolated accounts are kept
        normalize_rows: Divide each row by its maximum weight

    Returns:
        InfluenceGraph: Immutable graph
    """
    index: dict[str, int] = {}
    for vid in vertices or ():
        index.setdefault(vid, len(index))

    weights: dict[tuple[int, int], float] = {}
    self_loops = 0
    for k, (src, dst, weight) in enumerate(edges):
        weight = float(weight)
        if not math.isfinite(weight) or weight < 0:
            raise GraphConstructionError(
                f"Edge {k} ({src}->{dst}) has invalid weight {weight}", edge_index=k
            )
        i = index.setdefault(src, len(index))
        j = index.setdefault(dst, len(index))
        if i == j:
            self_loops += 1
            continue
        if weight > 0:
            weights[(i, j)] = weights.get((i, j), 0.0) + weight

    if self_loops:
        logger.warning(f"Dropped {self_loops} self-loop edge(s)")

    n = len(index)
    if weights:
        rows, cols = zip(*weights.keys())
        data = list(weights.values())
    else:
        rows, cols, data = (), (), ()
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n), dtype=float)
    matrix.sort_indices()

    if normalize_rows and matrix.nnz:
        row_max = matrix.max(axis=1).toarray().ravel()
        scale = np.divide(1.0, row_max, out=np.zeros(n), where=row_max > 0)
        matrix = sparse.csr_matrix(sparse.diags(scale) @ matrix)

    vertex_ids = tuple(sorted(index, key=index.__getitem__))
    logger.debug(f"Built influence graph with {n} vertices and {matrix.nnz} edges")
    return InfluenceGraph(vertex_ids=vertex_ids, influence=matrix)


def degrees(g: InfluenceGraph) -> DegreeStats:
    positive = (g.influence > 0).astype(float)
    return DegreeStats(
        out_degree=np.asarray(positive.sum(axis=1)).ravel().astype(int),
        in_degree=np.asarray(positive.sum(axis=0)).ravel().astype(int),
        out_strength=np.asarray(g.influence.sum(axis=1)).ravel(),
    )


def pagerank(
    g: InfluenceGraph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> CentralityVector:
    """
    PageRank by power iteration on the weighted random walk over A.

    A walker at v_i follows edge i->j with probability a_ij / sum_j a_ij.
    Dangling vertices (no out-weight) redistribute uniformly. Iteration stops
    when the L1 change drops below ``tol``.
    """
    n = g.n_vertices
    if n < 1:
        raise InputDataError("PageRank needs at least one vertex")
    if not 0.0 < damping < 1.0:
        raise InputDataError(f"Damping must lie in (0, 1), got {damping}")

    out_strength = np.asarray(g.influence.sum(axis=1)).ravel()
    dangling = out_strength <= 0
    inv = np.divide(1.0, out_strength, out=np.zeros(n), where=~dangling)
    # column-stochastic walk matrix M = (D^-1 A)^T
    walk = sparse.csr_matrix((sparse.diags(inv) @ g.influence).T)

    scores = np.full(n, 1.0 / n)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        updated = damping * (walk @ scores + scores[dangling].sum() / n) + (1.0 - damping) / n
        updated /= updated.sum()
        residual = float(np.abs(updated - scores).sum())
        scores = updated
        if residual < tol:
            return CentralityVector(scores=scores, damping=damping, iterations=iteration)

    raise ConvergenceError(
        f"PageRank did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
    )


def permute_graph(g: InfluenceGraph, order: Sequence[int]) -> InfluenceGraph:
    """Relabel vertices so that new position k holds old vertex order[k]."""
    order = np.asarray(order)
    matrix = sparse.csr_matrix(g.influence[order][:, order])
    matrix.sort_indices()
    return InfluenceGraph(vertex_ids=tuple(g.vertex_ids[k] for k in order), influence=matrix)


def to_networkx(g: InfluenceGraph) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(g.vertex_ids)
    graph.add_weighted_edges_from(g.edges())
    return graph


def to_dot(g: InfluenceGraph, labels: Optional[dict[str, str]] = None) -> str:
    """DOT text for external plotting; pen width follows edge weight."""
    labels = labels or {}
    lines = ["digraph influence {"]
    for vid in g.vertex_ids:
        label = labels.get(vid, vid).replace('"', '\\"')
        lines.append(f'  "{vid}" [label="{label}"];')
    for src, dst, weight in g.edges():
        lines.append(f'  "{src}" -> "{dst}" [weight={weight!r}, penwidth={1 + math.log1p(weight):.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
