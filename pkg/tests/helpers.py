"""Shared fixtures: synthetic networks, CSV writers, brute-force oracles."""

import numpy as np

INF = float("inf")


def write_nodes_csv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("node_id,lat,lon\n")
        for nid, lat, lon in rows:
            f.write(f"{nid},{lat},{lon}\n")


def write_edges_csv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("from_id,to_id,length_m,speed_mps\n")
        for u, v, length, speed in rows:
            f.write(f"{u},{v},{length},{speed}\n")


def write_requests_csv(path, rows, extra_cols=()):
    cols = "request_id,t_request_s,origin_node,dest_node"
    if extra_cols:
        cols += "," + ",".join(extra_cols)
    with open(path, "w", encoding="utf-8") as f:
        f.write(cols + "\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")


def grid_csv(tmp_path, side, spacing_m=100.0, speed=10.0):
    """Bidirectional side x side grid; returns (nodes_path, edges_path)."""
    nodes, edges = [], []
    for r in range(side):
        for c in range(side):
            nid = r * side + c
            nodes.append((nid, r * 0.001, c * 0.001))
            if c + 1 < side:
                edges.append((nid, nid + 1, spacing_m, speed))
                edges.append((nid + 1, nid, spacing_m, speed))
            if r + 1 < side:
                edges.append((nid, nid + side, spacing_m, speed))
                edges.append((nid + side, nid, spacing_m, speed))
    np_path = tmp_path / "nodes.csv"
    ep_path = tmp_path / "edges.csv"
    write_nodes_csv(np_path, nodes)
    write_edges_csv(ep_path, edges)
    return np_path, ep_path


def random_graph_csv(tmp_path, n, rng, extra_edges=None, speed=10.0, name=""):
    """Strongly connected random digraph: a ring plus random chords."""
    if extra_edges is None:
        extra_edges = 3 * n
    nodes = [(i, rng.random(), rng.random()) for i in range(n)]
    seen = set()
    edges = []
    for i in range(n):
        j = (i + 1) % n
        seen.add((i, j))
        edges.append((i, j, float(rng.integers(50, 500)), speed))
    tries = 0
    while len(edges) < n + extra_edges and tries < 50 * extra_edges:
        tries += 1
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v, float(rng.integers(50, 500)), speed))
    np_path = tmp_path / f"nodes{name}.csv"
    ep_path = tmp_path / f"edges{name}.csv"
    write_nodes_csv(np_path, nodes)
    write_edges_csv(ep_path, edges)
    return np_path, ep_path


def random_length_grid_csv(tmp_path, side, rng, name="", lo_m=120, hi_m=400, speed=10.0):
    """Bidirectional grid with per-edge random lengths: a road-like random graph."""
    nodes, edges = [], []
    for r in range(side):
        for c in range(side):
            nid = r * side + c
            nodes.append((nid, r * 0.001, c * 0.001))
            if c + 1 < side:
                length = float(rng.integers(lo_m, hi_m))
                edges.append((nid, nid + 1, length, speed))
                edges.append((nid + 1, nid, length, speed))
            if r + 1 < side:
                length = float(rng.integers(lo_m, hi_m))
                edges.append((nid, nid + side, length, speed))
                edges.append((nid + side, nid, length, speed))
    np_path = tmp_path / f"nodes_g{name}.csv"
    ep_path = tmp_path / f"edges_g{name}.csv"
    write_nodes_csv(np_path, nodes)
    write_edges_csv(ep_path, edges)
    return np_path, ep_path


def make_request(net, rid, origin, dest, max_detour=0.3, t=0.0):
    from poolsim.demand import Request

    return Request(rid, t, origin, dest,
                   direct_cost=net.shortest_cost(origin, dest),
                   max_detour_ratio=max_detour)


def make_pool_instance(net, rng, k, detour_bound=0.3,
                       origin_ball=200_000, dest_ball=200_000, min_trip=2_000_000):
    """One poolable candidate group: an idle vehicle plus ``k`` requests.

    Mirrors the situations the candidate builder evaluates: pickups cluster
    within a small reach ball of the vehicle, destinations cluster around a
    common far-away anchor, so itineraries overlap the way real pooled
    trips do.
    """
    from poolsim.demand import Position, Vehicle

    n = net.n_nodes
    vpos = int(rng.integers(0, n))
    veh = Vehicle(0, 4, Position(vpos, vpos))
    row_v = net.cost_row(vpos)
    near_o = np.flatnonzero(row_v <= origin_ball)
    far = np.flatnonzero(row_v >= min_trip)
    if len(far) == 0:
        far = np.arange(n)
    anchor = int(far[rng.integers(0, len(far))])
    near_d = np.flatnonzero(net.cost_row(anchor) <= dest_ball)
    reqs = []
    for j in range(k):
        o = int(near_o[rng.integers(0, len(near_o))])
        d = o
        tries = 0
        while d == o and tries < 50:
            d = int(near_d[rng.integers(0, len(near_d))])
            tries += 1
        if d == o:
            d = (o + 1) % n
        reqs.append(make_request(net, j, o, d, max_detour=detour_bound))
    return veh, reqs


def floyd_warshall_int(n, weighted_edges):
    """All-pairs shortest costs by Floyd-Warshall over integer weights.

    ``weighted_edges``: iterable of (u, v, w) with integer w. Returns an
    (n, n) float array with INF for unreachable pairs; finite entries are
    exact integers.
    """
    d = np.full((n, n), INF)
    np.fill_diagonal(d, 0.0)
    for u, v, w in weighted_edges:
        if w < d[u, v]:
            d[u, v] = float(w)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def net_weighted_edges(net):
    """(u, v, weight) triples of a loaded RoadNetwork."""
    out = []
    for u in range(net.n_nodes):
        for v, w in net.adj[u]:
            out.append((u, v, w))
    return out
