import itertools
import math

import networkx as nx
import numpy as np
import pytest

from contactlab.distributions import Deterministic, Geometric, PowerLawTail
from contactlab.errors import ConfigError, ConvergenceError, InvalidParameterError
from contactlab.graphs import (Graph, chain_end, count_stars, degree_bounds, generate_config_model, generate_path,
                               generate_star, generate_star_chain, largest_component, max_eigenvalue, read_edge_list,
                               sample_gw_tree, write_edge_list)


def to_networkx(g):
    graph = nx.MultiGraph()
    graph.add_nodes_from(range(g.n_vertices))
    graph.add_edges_from(g.edges().tolist())
    return graph


def test_star_degrees():
    assert generate_star(1).degrees.tolist() == [1, 1]
    star = generate_star(4)
    assert star.n_vertices == 5
    assert star.degrees.tolist() == [4, 1, 1, 1, 1]
    star.check()


def test_star_rejects_zero_leaves():
    with pytest.raises(InvalidParameterError):
        generate_star(0)


@pytest.mark.parametrize("k, expected", [(4, 2.0), (100, 10.0)])
def test_star_spectral_radius(k, expected):
    assert max_eigenvalue(generate_star(k)) == pytest.approx(expected, abs=1e-6)


def test_complete_graph_and_cycle():
    k5 = Graph.from_edges(5, list(itertools.combinations(range(5), 2)))
    assert max_eigenvalue(k5) == pytest.approx(4.0, abs=1e-6)
    c8 = Graph.from_edges(8, [(v, (v + 1) % 8) for v in range(8)])
    assert max_eigenvalue(c8) == pytest.approx(2.0, abs=1e-6)


def test_spectral_radius_matches_dense_eigensolver():
    reference = nx.barabasi_albert_graph(200, 3, seed=1)
    g = Graph.from_edges(200, list(reference.edges()))
    expected = float(np.linalg.eigvalsh(nx.to_numpy_array(reference)).max())
    assert max_eigenvalue(g) == pytest.approx(expected, abs=1e-6)


def test_star_chain_shape():
    g = generate_star_chain(2, 1)
    assert g.degrees.tolist() == [3, 1, 1, 1]
    g = generate_star_chain(3, 2)
    assert (g.n_vertices, g.n_edges) == (6, 5)
    assert nx.is_connected(to_networkx(g))
    g = generate_star_chain(50, 10)
    assert nx.shortest_path_length(to_networkx(g), 0, chain_end(50, 10)) == 10
    assert g.degrees[chain_end(50, 10)] == 1


def test_path():
    g = generate_path(3)
    assert g.degrees.tolist() == [1, 2, 2, 1]


def test_self_loop_and_parallel_edges():
    g = Graph.from_edges(3, [(0, 0), (0, 1), (0, 1), (1, 2)])
    assert g.degrees.tolist() == [4, 3, 1]
    assert g.n_edges == 4
    assert g.self_loops().tolist() == [1, 0, 0]
    assert sorted(map(tuple, g.edges().tolist())) == [(0, 0), (0, 1), (0, 1), (1, 2)]
    assert np.asarray(g.to_sparse().sum(axis=1)).ravel().tolist() == [4, 3, 1]
    assert g.check()


def test_edge_list_file(tmp_path):
    g = Graph.from_edges(4, [(0, 1), (1, 1), (2, 3)])
    path = tmp_path / "g.txt"
    write_edge_list(g, str(path))
    assert path.read_text().splitlines()[0] == "# vertices=4"
    again = read_edge_list(str(path))
    assert again.degrees.tolist() == g.degrees.tolist()


def test_gw_deterministic_offspring(rng):
    tree = sample_gw_tree(Deterministic(1), 10, rng)
    assert tree.graph.n_vertices == 10
    assert tree.graph.degrees.tolist() == [1] + [2] * 8 + [1]
    assert tree.budget_exhausted
    root_only = sample_gw_tree(Deterministic(0), 10, rng)
    assert root_only.graph.n_vertices == 1
    assert not root_only.budget_exhausted
    assert root_only.interior.tolist() == [True]


def test_gw_boundary_marks_unexpanded_vertices(rng):
    tree = sample_gw_tree(Deterministic(2), 6, rng)
    # root and its two children are expanded; generation 2 is cut at 3 of 4 vertices
    assert tree.graph.n_vertices == 6
    assert tree.interior.tolist() == [True, True, False, False, False, False]
    assert tree.generation_sizes().tolist() == [1, 2, 3]


def test_gw_generation_growth(rng):
    replicas = 2000
    sizes = []
    for _ in range(replicas):
        tree = sample_gw_tree(Geometric(0.5), 100_000, rng, max_generation=5)
        counts = tree.generation_sizes()
        sizes.append(int(counts[5]) if counts.size > 5 else 0)
    sizes = np.asarray(sizes, dtype=float)
    se = sizes.std(ddof=1) / math.sqrt(replicas)
    assert abs(sizes.mean() - 32.0) <= 4 * se


def test_config_model_small_deterministic(rng):
    g = generate_config_model(2, Deterministic(3), rng)
    assert g.degrees.tolist() == [3, 3]
    assert g.n_edges == 3
    with pytest.raises(InvalidParameterError):
        generate_config_model(3, Deterministic(3), rng)


def test_config_model_geometric_mean(rng):
    n = 10_000
    g = generate_config_model(n, Geometric(0.5), rng)
    g.check()
    se = math.sqrt(2.0 / n)
    assert abs(g.degrees.mean() - 2.0) <= 4 * se


def test_config_model_power_law(rng):
    for _ in range(20):
        g = generate_config_model(1000, PowerLawTail(2.5), rng)
        assert g.degrees.min() >= 3
        assert int(g.degrees.sum()) % 2 == 0
        low, high = degree_bounds(g)
        assert low - 1e-6 <= max_eigenvalue(g, tol=1e-8) <= high * (1 + 1e-6)


def test_largest_component_and_stars():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (3, 4)])
    assert sorted(largest_component(g).tolist()) == [0, 1, 2]
    assert count_stars(generate_star(5), 5) == 1
    assert count_stars(generate_star(5), 1) == 6


def test_spectral_radius_residual():
    # path on 7 vertices: 2 cos(pi / 8), and not an eigenvector at the start
    g = generate_path(6)
    value = max_eigenvalue(g, tol=1e-9)
    assert value == pytest.approx(2.0 * math.cos(math.pi / 8.0), abs=1e-8)


def test_spectral_radius_reports_last_estimate():
    with pytest.raises(ConvergenceError) as info:
        max_eigenvalue(generate_star(100), tol=1e-12, max_iters=2)
    assert info.value.iterations == 2
    assert 0.0 < info.value.last_estimate <= 10.0


def test_edge_list_skips_config_line(tmp_path):
    path = tmp_path / "g.txt"
    write_edge_list(generate_star(3), str(path), header='{"command":"gen","k":3}')
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# vertices=4", '# config: {"command":"gen","k":3}']
    assert read_edge_list(str(path)).degrees.tolist() == [3, 1, 1, 1]


def test_edge_list_missing_or_malformed(tmp_path):
    with pytest.raises(ConfigError):
        read_edge_list(str(tmp_path / "absent.txt"))
    bad = tmp_path / "bad.txt"
    bad.write_text("# vertices=3\n0 x\n")
    with pytest.raises(InvalidParameterError):
        read_edge_list(str(bad))


def test_config_model_pairing_is_uniform(rng):
    # four vertices of degree one: each of the three perfect matchings with probability 1/3
    draws = 6000
    counts = {}
    for _ in range(draws):
        g = generate_config_model(4, Deterministic(1), rng)
        matching = tuple(sorted(tuple(sorted(edge)) for edge in g.edges().tolist()))
        counts[matching] = counts.get(matching, 0) + 1
    assert set(counts) == {((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))}
    sigma = math.sqrt((1 / 3) * (2 / 3) / draws)
    for count in counts.values():
        assert abs(count / draws - 1 / 3) <= 4 * sigma


def test_config_model_degree_sum_always_even(rng):
    for _ in range(1000):
        g = generate_config_model(51, Geometric(0.5), rng)
        assert int(g.degrees.sum()) % 2 == 0
        assert g.degrees.sum() == 2 * g.n_edges
