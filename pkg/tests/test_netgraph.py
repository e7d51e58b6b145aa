"""Network loading and shortest-path correctness against brute-force oracles."""

import numpy as np
import pytest

from poolsim.errors import DanglingEdge, MalformedRow, Unreachable
from poolsim.netgraph import INF_COST, WeightMode, load_network

from helpers import (
    INF,
    floyd_warshall_int,
    grid_csv,
    net_weighted_edges,
    random_graph_csv,
    write_edges_csv,
    write_nodes_csv,
)


def test_single_edge_distance_cost(tmp_path):
    write_nodes_csv(tmp_path / "n.csv", [(0, 0.0, 0.0), (1, 0.0, 0.001)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 100.0, 10.0)])
    net = load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    # 100 m -> 100_000 mm
    assert net.shortest_cost(0, 1) == 100_000
    res = net.shortest_path(0, 1)
    assert res.nodes == [0, 1]
    assert res.cost == 100_000


def test_travel_time_weights(tmp_path):
    write_nodes_csv(tmp_path / "n.csv", [(0, 0.0, 0.0), (1, 0.0, 0.001)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 100.0, 10.0)])
    net = load_network(tmp_path / "n.csv", tmp_path / "e.csv", "travel_time")
    assert net.shortest_cost(0, 1) == 10_000  # 10 s -> 10_000 ms


def test_dangling_edge(tmp_path):
    write_nodes_csv(tmp_path / "n.csv", [(i, 0.0, 0.0) for i in range(3)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 100.0, 10.0), (1, 99, 100.0, 10.0)])
    with pytest.raises(DanglingEdge) as exc:
        load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    assert exc.value.node_id == 99


@pytest.mark.parametrize("bad_row, reason", [
    ("0,1,abc,10.0", "float"),
    ("0,1,-5,10.0", "length"),
    ("0,1,100,0", "speed"),
    ("0,0,100,10", "self-loop"),
])
def test_malformed_edge_rows(tmp_path, bad_row, reason):
    write_nodes_csv(tmp_path / "n.csv", [(0, 0.0, 0.0), (1, 0.0, 0.001)])
    with open(tmp_path / "e.csv", "w") as f:
        f.write("from_id,to_id,length_m,speed_mps\n" + bad_row + "\n")
    with pytest.raises(MalformedRow) as exc:
        load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    assert exc.value.line_no == 2


def test_duplicate_edges_keep_minimum(tmp_path):
    write_nodes_csv(tmp_path / "n.csv", [(0, 0.0, 0.0), (1, 0.0, 0.001)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 300.0, 10.0), (0, 1, 100.0, 10.0)])
    net = load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    assert net.shortest_cost(0, 1) == 100_000


def test_square_grid_matches_floyd_warshall(tmp_path):
    nodes_p, edges_p = grid_csv(tmp_path, 2, spacing_m=100.0)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE)
    oracle = floyd_warshall_int(net.n_nodes, net_weighted_edges(net))
    for s in range(net.n_nodes):
        for t in range(net.n_nodes):
            assert net.shortest_cost(s, t) == int(oracle[s, t])


def test_identity_and_unreachable(tmp_path):
    write_nodes_csv(tmp_path / "n.csv", [(0, 0.0, 0.0), (1, 0.0, 0.001)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 100.0, 10.0)])
    net = load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    res = net.shortest_path(1, 1)
    assert res.nodes == [1] and res.cost == 0
    assert net.shortest_cost(1, 1) == 0
    with pytest.raises(Unreachable):
        net.shortest_path(1, 0)
    with pytest.raises(Unreachable):
        net.shortest_cost(1, 0)


@pytest.mark.parametrize("apsp", [True, False])
def test_random_graph_all_pairs_vs_oracle(tmp_path, apsp):
    rng = np.random.default_rng(7)
    nodes_p, edges_p = random_graph_csv(tmp_path, 50, rng)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE,
                       apsp_max_nodes=6000 if apsp else 0)
    oracle = floyd_warshall_int(net.n_nodes, net_weighted_edges(net))
    pairs = [(int(rng.integers(0, 50)), int(rng.integers(0, 50))) for _ in range(100)]
    for s, t in pairs:
        expected = oracle[s, t]
        assert expected < INF  # ring guarantees strong connectivity
        path = net.shortest_path(s, t)
        assert path.cost == int(expected)
        assert net.shortest_cost(s, t) == int(expected)
        # path validity: consecutive edges exist, weights sum to cost
        total = 0
        for a, b in zip(path.nodes, path.nodes[1:]):
            total += net.edge(a, b).weight
        assert total == path.cost
        assert path.nodes[0] == s and path.nodes[-1] == t


@pytest.mark.parametrize("apsp", [True, False])
def test_path_nodes_matches_cost(tmp_path, apsp):
    rng = np.random.default_rng(11)
    nodes_p, edges_p = random_graph_csv(tmp_path, 40, rng)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE,
                       apsp_max_nodes=6000 if apsp else 0)
    for _ in range(100):
        s = int(rng.integers(0, 40))
        t = int(rng.integers(0, 40))
        nodes = net.path_nodes(s, t)
        total = sum(net.edge(a, b).weight for a, b in zip(nodes, nodes[1:]))
        assert total == net.shortest_cost(s, t)
        assert nodes[0] == s and nodes[-1] == t


def test_cache_coherence(tmp_path):
    rng = np.random.default_rng(3)
    nodes_p, edges_p = random_graph_csv(tmp_path, 30, rng)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE, apsp_max_nodes=0)
    a = net.shortest_cost(3, 17)
    b = net.shortest_cost(3, 17)
    assert a == b
    net.end_epoch()
    assert net.shortest_cost(3, 17) == a


def test_triangle_inequality(tmp_path):
    rng = np.random.default_rng(23)
    nodes_p, edges_p = random_graph_csv(tmp_path, 40, rng)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE)
    for _ in range(200):
        a, b, c = (int(x) for x in rng.integers(0, 40, size=3))
        assert net.shortest_cost(a, c) <= net.shortest_cost(a, b) + net.shortest_cost(b, c)


def test_cost_row_and_col_consistency(tmp_path):
    rng = np.random.default_rng(5)
    nodes_p, edges_p = random_graph_csv(tmp_path, 30, rng)
    for apsp in (6000, 0):
        net = load_network(nodes_p, edges_p, WeightMode.DISTANCE, apsp_max_nodes=apsp)
        row = net.cost_row(4)
        col = net.cost_col(9)
        for t in range(30):
            assert row[t] == net.shortest_cost(4, t)
        for s in range(30):
            assert col[s] == net.shortest_cost(s, 9)
        assert row.max() < INF_COST
