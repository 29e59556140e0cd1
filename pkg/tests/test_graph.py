import logging

import networkx as nx
import numpy as np
import pytest

from src.core.errors import ConvergenceError, GraphConstructionError, InputDataError
from src.core.graph import (
    SourceVector,
    build_influence_graph,
    degrees,
    pagerank,
    permute_graph,
    to_dot,
    to_networkx,
)
from tests.conftest import random_graph


def test_build_graph_vertex_order_and_weights():
    g = build_influence_graph([("a", "b", 2), ("b", "c", 1)])
    assert g.vertex_ids == ("a", "b", "c")
    assert g.influence.toarray().tolist() == [[0, 2, 0], [0, 0, 1], [0, 0, 0]]
    assert g.edge_count == 2


def test_duplicate_pairs_are_summed():
    g = build_influence_graph([("a", "b", 1), ("a", "b", 1)])
    assert g.weight("a", "b") == 2.0
    assert g.edge_count == 1


def test_self_loop_is_dropped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        g = build_influence_graph([("a", "a", 5)])
    assert g.n_vertices == 1
    assert g.edge_count == 0
    assert "self-loop" in caplog.text


@pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
def test_invalid_weight_reports_edge_index(bad):
    with pytest.raises(GraphConstructionError) as excinfo:
        build_influence_graph([("a", "b", 1), ("b", "c", bad)])
    assert excinfo.value.edge_index == 1


def test_explicit_vertices_keep_isolated_accounts():
    g = build_influence_graph([("b", "c", 1)], vertices=["a", "b"])
    assert g.vertex_ids == ("a", "b", "c")
    assert g.influence[0].nnz == 0


def test_normalize_rows_divides_by_row_maximum():
    g = build_influence_graph([("a", "b", 4), ("a", "c", 2), ("b", "c", 3)], normalize_rows=True)
    assert g.weight("a", "b") == 1.0
    assert g.weight("a", "c") == 0.5
    assert g.weight("b", "c") == 1.0


def test_degrees_chain(chain_graph):
    stats = degrees(chain_graph)
    assert stats.out_degree.tolist() == [1, 1, 0]
    assert stats.in_degree.tolist() == [0, 1, 1]
    assert stats.out_strength.tolist() == [2.0, 1.0, 0.0]


def test_degrees_star_and_empty():
    star = build_influence_graph([("hub", f"leaf{k}", 1) for k in range(4)])
    stats = degrees(star)
    assert stats.out_degree.tolist() == [4, 0, 0, 0, 0]
    assert stats.in_degree.tolist() == [0, 1, 1, 1, 1]

    empty = build_influence_graph([], vertices=["a", "b"])
    assert degrees(empty).out_degree.tolist() == [0, 0]


def test_pagerank_two_cycle_is_uniform():
    g = build_influence_graph([("a", "b", 1), ("b", "a", 1)])
    scores = pagerank(g).scores
    np.testing.assert_allclose(scores, [0.5, 0.5], atol=1e-10)


def test_pagerank_single_vertex():
    g = build_influence_graph([], vertices=["a"])
    assert pagerank(g).scores.tolist() == pytest.approx([1.0])


def test_pagerank_rejects_empty_graph():
    with pytest.raises(InputDataError):
        pagerank(build_influence_graph([], vertices=[]))


def _dense_pagerank(a: np.ndarray, damping: float) -> np.ndarray:
    n = a.shape[0]
    out = a.sum(axis=1)
    walk = np.where(out[:, None] > 0, a / np.where(out > 0, out, 1.0)[:, None], 1.0 / n)
    system = np.eye(n) - damping * walk.T
    return np.linalg.solve(system, np.full(n, (1.0 - damping) / n))


@pytest.mark.parametrize("seed", range(5))
def test_pagerank_matches_dense_solution(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 15, density=0.2)
    expected = _dense_pagerank(g.influence.toarray(), 0.85)
    expected /= expected.sum()
    np.testing.assert_allclose(pagerank(g, tol=1e-13, max_iter=1000).scores, expected, atol=1e-8)


def test_pagerank_agrees_with_networkx():
    g = random_graph(np.random.default_rng(11), 20, density=0.15)
    ours = pagerank(g, tol=1e-13, max_iter=1000).scores
    theirs = nx.pagerank(to_networkx(g), alpha=0.85, tol=1e-14, max_iter=1000, weight="weight")
    np.testing.assert_allclose(ours, [theirs[v] for v in g.vertex_ids], atol=1e-8)


def test_pagerank_raises_when_iterations_run_out(chain_graph):
    with pytest.raises(ConvergenceError) as excinfo:
        pagerank(chain_graph, max_iter=1)
    assert excinfo.value.residual > 0


def test_pagerank_is_permutation_equivariant():
    g = random_graph(np.random.default_rng(3), 12)
    order = np.random.default_rng(4).permutation(12)
    permuted = permute_graph(g, order)
    base = dict(zip(g.vertex_ids, pagerank(g).scores))
    moved = dict(zip(permuted.vertex_ids, pagerank(permuted).scores))
    for vid in g.vertex_ids:
        assert moved[vid] == pytest.approx(base[vid], abs=1e-9)


def test_edge_order_does_not_change_the_graph():
    edges = [("a", "b", 1.0), ("c", "a", 2.0), ("b", "c", 0.5)]
    forward = build_influence_graph(edges, vertices=["a", "b", "c"])
    backward = build_influence_graph(list(reversed(edges)), vertices=["a", "b", "c"])
    assert (forward.influence != backward.influence).nnz == 0


def test_networkx_and_dot_exports(chain_graph):
    nxg = to_networkx(chain_graph)
    assert nxg["a"]["b"]["weight"] == 2.0
    assert nxg.number_of_edges() == 2

    dot = to_dot(chain_graph, labels={"a": "alice"})
    assert dot.startswith("digraph influence {")
    assert '"a" [label="alice"];' in dot
    assert '"a" -> "b"' in dot


def test_source_vector_validation_and_toggles(chain_graph):
    with pytest.raises(InputDataError):
        SourceVector(np.array([0.0, 2.0]))

    z = SourceVector.from_ids(chain_graph, ["b"])
    assert z.z.tolist() == [0.0, 1.0, 0.0]
    assert z.with_source(0).z.tolist() == [1.0, 1.0, 0.0]
    assert z.without_source(1).z.tolist() == [0.0, 0.0, 0.0]
    assert z.z.tolist() == [0.0, 1.0, 0.0]

    with pytest.raises(InputDataError):
        SourceVector.from_ids(chain_graph, ["nobody"])
