"""Demand stream and fleet-initialization behavior."""

import numpy as np
import pytest
from scipy.stats import chisquare

from poolsim.demand import (
    DemandConfig,
    HotZonesSource,
    UniformSource,
    init_fleet,
    load_requests,
    synthesize_requests,
)
from poolsim.errors import DisconnectedDemandNode, MalformedRow
from poolsim.netgraph import WeightMode, load_network

from helpers import (
    floyd_warshall_int,
    grid_csv,
    net_weighted_edges,
    random_graph_csv,
    write_edges_csv,
    write_nodes_csv,
    write_requests_csv,
)


@pytest.fixture
def grid_net(tmp_path):
    nodes_p, edges_p = grid_csv(tmp_path, 5)
    return load_network(nodes_p, edges_p, WeightMode.DISTANCE)


def test_empty_file(tmp_path, grid_net):
    write_requests_csv(tmp_path / "r.csv", [])
    assert load_requests(grid_net, tmp_path / "r.csv") == []


def test_rows_sorted_by_time(tmp_path, grid_net):
    rows = [(0, 30.0, 0, 5), (1, 10.0, 1, 6), (2, 20.0, 2, 7)]
    write_requests_csv(tmp_path / "r.csv", rows)
    reqs = load_requests(grid_net, tmp_path / "r.csv")
    assert [r.t_request for r in reqs] == [10.0, 20.0, 30.0]
    assert [r.id for r in reqs] == [1, 2, 0]


def test_direct_costs_match_oracle(tmp_path):
    rng = np.random.default_rng(17)
    nodes_p, edges_p = random_graph_csv(tmp_path, 50, rng)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE)
    rows = []
    for i in range(100):
        o = int(rng.integers(0, 50))
        d = o
        while d == o:
            d = int(rng.integers(0, 50))
        rows.append((i, float(rng.uniform(0, 100)), o, d))
    write_requests_csv(tmp_path / "r.csv", rows)
    reqs = load_requests(net, tmp_path / "r.csv")
    oracle = floyd_warshall_int(net.n_nodes, net_weighted_edges(net))
    for r in reqs:
        assert r.direct_cost == int(oracle[r.origin, r.destination])
        assert r.direct_distance_m == pytest.approx(r.direct_cost / 1000.0)


def test_origin_equals_destination_rejected(tmp_path, grid_net):
    write_requests_csv(tmp_path / "r.csv", [(0, 1.0, 3, 3)])
    with pytest.raises(MalformedRow):
        load_requests(grid_net, tmp_path / "r.csv")


def test_disconnected_demand_node(tmp_path):
    # node 2 has no edges at all
    write_nodes_csv(tmp_path / "n.csv", [(0, 0, 0), (1, 0, 0.001), (2, 0, 0.002)])
    write_edges_csv(tmp_path / "e.csv", [(0, 1, 100, 10), (1, 0, 100, 10)])
    net = load_network(tmp_path / "n.csv", tmp_path / "e.csv", WeightMode.DISTANCE)
    write_requests_csv(tmp_path / "r.csv", [(0, 1.0, 0, 2)])
    with pytest.raises(DisconnectedDemandNode):
        load_requests(net, tmp_path / "r.csv")


def test_optional_override_columns(tmp_path, grid_net):
    write_requests_csv(tmp_path / "r.csv", [(0, 1.0, 0, 5, 0.5, 120.0)],
                       extra_cols=("max_detour_ratio", "max_wait_s"))
    (req,) = load_requests(grid_net, tmp_path / "r.csv", default_max_wait=600.0)
    assert req.detour_override == 0.5
    assert req.max_wait == 120.0


def test_synthesize_determinism(grid_net):
    cfg = DemandConfig(UniformSource(rate=0.05), horizon_s=600.0, seed=42)
    a = synthesize_requests(grid_net, cfg)
    b = synthesize_requests(grid_net, cfg)
    assert [(r.id, r.t_request, r.origin, r.destination) for r in a] == \
           [(r.id, r.t_request, r.origin, r.destination) for r in b]
    assert all(0.0 < r.t_request <= 600.0 for r in a)
    assert all(r.t_request <= s.t_request for r, s in zip(a, a[1:]))


def test_synthesize_near_zero_rate(grid_net):
    cfg = DemandConfig(UniformSource(rate=1e-9), horizon_s=100.0, seed=7)
    assert synthesize_requests(grid_net, cfg) == []


def test_uniform_origin_histogram(tmp_path):
    nodes_p, edges_p = grid_csv(tmp_path, 10)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE)
    cfg = DemandConfig(UniformSource(rate=10.0), horizon_s=1000.0, seed=3)
    reqs = synthesize_requests(net, cfg)
    assert len(reqs) > 5000
    counts = np.bincount([r.origin for r in reqs], minlength=net.n_nodes)
    stat, p = chisquare(counts)
    assert p > 0.01


def test_hot_zone_degenerate_weight(grid_net):
    zone = [3, 7, 11]
    cfg = DemandConfig(HotZonesSource([zone, [20, 21]], [1.0, 0.0], rate=0.2),
                       horizon_s=500.0, seed=5)
    reqs = synthesize_requests(grid_net, cfg)
    assert len(reqs) > 0
    assert all(r.origin in zone for r in reqs)


def test_init_fleet_degenerate_origins(tmp_path, grid_net):
    write_requests_csv(tmp_path / "r.csv", [(i, 5.0, 7, 8) for i in range(5)])
    reqs = load_requests(grid_net, tmp_path / "r.csv")
    fleet = init_fleet(grid_net, 100, 4, reqs, seed=1)
    assert len(fleet) == 100
    assert all(v.pos.u == 7 and v.pos.at_node for v in fleet)
    assert all(v.capacity == 4 and not v.onboard and not v.scheduled for v in fleet)


def test_init_fleet_empty_stream_deterministic(grid_net):
    a = init_fleet(grid_net, 1, 2, [], seed=9)
    b = init_fleet(grid_net, 1, 2, [], seed=9)
    assert a[0].pos == b[0].pos


def test_init_fleet_matches_origin_distribution(tmp_path):
    nodes_p, edges_p = grid_csv(tmp_path, 10)
    net = load_network(nodes_p, edges_p, WeightMode.DISTANCE)
    rng = np.random.default_rng(11)
    hot = [int(x) for x in rng.choice(net.n_nodes, size=10, replace=False)]
    weights = [0.3, 0.2, 0.15, 0.1, 0.05, 0.05, 0.05, 0.04, 0.03, 0.03]
    cfg = DemandConfig(HotZonesSource([[h] for h in hot], weights, rate=4.0),
                       horizon_s=25.0, seed=13)
    reqs = synthesize_requests(net, cfg)
    fleet = init_fleet(net, 500, 4, reqs, seed=16, epoch_length_s=30.0)
    origin_hist = np.bincount([r.origin for r in reqs if r.t_request <= 30.0],
                              minlength=net.n_nodes).astype(float)
    origin_hist /= origin_hist.sum()
    veh_hist = np.bincount([v.pos.u for v in fleet], minlength=net.n_nodes).astype(float)
    veh_hist /= veh_hist.sum()
    tv = 0.5 * np.abs(origin_hist - veh_hist).sum()
    assert tv <= 0.05
