"""Road network storage and shortest-path queries.

The network is a directed weighted graph loaded from two CSV files
(nodes: ``node_id,lat,lon``; edges: ``from_id,to_id,length_m,speed_mps``).
Edge weights are stored as exact integers -- millimeters in distance mode,
milliseconds in travel-time mode -- so path costs add without float error
and Dijkstra runs deterministically.

All public queries use internal node indices ``0..n-1`` (assigned to the
sorted external ids at load time). The network is immutable after load;
query caches are safe to drop wholesale between decision epochs.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra as _csgraph_dijkstra

from .errors import DanglingEdge, MalformedRow, Unreachable

# Sentinel for "no path" in int64 cost arrays; large enough that any
# reach-bound filter excludes it, small enough to add a real cost without
# overflowing int64.
INF_COST = 2 ** 62

# Integer sub-units per meter (distance mode) and per second (time mode).
UNITS_PER_M = 1000
UNITS_PER_S = 1000


class WeightMode(Enum):
    DISTANCE = "distance"
    TRAVEL_TIME = "travel_time"


@dataclass(frozen=True)
class Edge:
    """One directed road segment."""

    u: int
    v: int
    length_m: float
    speed_mps: float
    weight: int          # active-mode cost units (mm or ms)
    time_s: float        # free-flow traversal time

    @property
    def travel_time(self) -> float:
        return self.time_s


@dataclass
class PathResult:
    nodes: list[int]
    cost: int


class RoadNetwork:
    """Immutable road graph plus exact shortest-path oracles.

    Queries come in two flavors:

    * :meth:`shortest_path` -- reference binary-heap Dijkstra with a fixed
      tie-break (equal-cost frontier entries pop lowest node id first);
      returns the node sequence.
    * :meth:`shortest_cost` / :meth:`cost_row` / :meth:`cost_col` -- fast
      cost-only queries backed by an all-pairs table (small networks) or a
      per-source cache of C Dijkstra runs. Both return exactly the same
      integer costs as the reference implementation; the equivalence is
      enforced by tests.
    """

    def __init__(self, node_ids, lat, lon, edges, weight_mode: WeightMode,
                 apsp_max_nodes: int = 6000):
        self.node_ids = np.asarray(node_ids, dtype=np.int64)   # external ids
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.n_nodes = len(self.node_ids)
        self.weight_mode = weight_mode
        self._ext_to_int = {int(e): i for i, e in enumerate(self.node_ids)}

        # adjacency sorted by target id: deterministic iteration everywhere
        self.adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        self._edge_index: dict[tuple[int, int], Edge] = {}
        for e in sorted(edges, key=lambda e: (e.u, e.v)):
            self.adj[e.u].append((e.v, e.weight))
            self._edge_index[(e.u, e.v)] = e
        self.n_edges = len(self._edge_index)

        rows = np.fromiter((e.u for e in self._edge_index.values()), dtype=np.int64, count=self.n_edges)
        cols = np.fromiter((e.v for e in self._edge_index.values()), dtype=np.int64, count=self.n_edges)
        wts = np.fromiter((e.weight for e in self._edge_index.values()), dtype=np.float64, count=self.n_edges)
        self._csr = csr_matrix((wts, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        self._csr_rev = self._csr.T.tocsr()

        n_scc, labels = connected_components(self._csr, directed=True, connection="strong")
        self.scc_labels = labels

        total_len = sum(e.length_m for e in self._edge_index.values())
        total_time = sum(e.time_s for e in self._edge_index.values())
        self.mean_speed_mps = (total_len / total_time) if total_time > 0 else 0.0

        # Optional congestion model: object with update(net, clock_s) -> bool.
        # Static speeds by default; the engine calls refresh_weights() once
        # per epoch and rebuilds nothing when it returns False.
        self.congestion_model = None

        self._dist_matrix: np.ndarray | None = None
        if self.n_nodes <= apsp_max_nodes:
            self._build_apsp()
        self._row_cache: dict[int, np.ndarray] = {}
        self._col_cache: dict[int, np.ndarray] = {}
        self._cache_cap = 8192

    # --- loading -------------------------------------------------------------

    def to_internal(self, external_id: int) -> int:
        return self._ext_to_int[int(external_id)]

    def edge(self, u: int, v: int) -> Edge:
        return self._edge_index[(u, v)]

    def out_edges(self, u: int) -> list[tuple[int, int]]:
        return self.adj[u]

    # --- epoch hooks ---------------------------------------------------------

    def refresh_weights(self, clock_s: float) -> bool:
        """Per-epoch congestion hook; no-op with static speeds."""
        if self.congestion_model is None:
            return False
        changed = self.congestion_model.update(self, clock_s)
        if changed:
            raise NotImplementedError(
                "dynamic edge-weight refresh requires rebuilding the cost "
                "tables; plug-in congestion models are an extension point")
        return changed

    def end_epoch(self) -> None:
        """Drop per-epoch query caches (costs are stable within an epoch)."""
        self._row_cache.clear()
        self._col_cache.clear()

    # --- reference Dijkstra ---------------------------------------------------

    def shortest_path(self, src: int, dst: int) -> PathResult:
        """Binary-heap Dijkstra; ties pop the lower node id first."""
        self._check_node(src)
        self._check_node(dst)
        if src == dst:
            return PathResult([src], 0)
        dist = {src: 0}
        parent: dict[int, int] = {}
        done = set()
        heap = [(0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            if u == dst:
                break
            done.add(u)
            for v, w in self.adj[u]:
                nd = d + w
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, v))
        if dst not in dist:
            raise Unreachable(src, dst)
        nodes = [dst]
        while nodes[-1] != src:
            nodes.append(parent[nodes[-1]])
        nodes.reverse()
        return PathResult(nodes, dist[dst])

    # --- fast cost oracle ------------------------------------------------------

    def shortest_cost(self, src: int, dst: int) -> int:
        if src == dst:
            self._check_node(src)
            return 0
        c = int(self.cost_row(src)[dst])
        if c >= INF_COST:
            raise Unreachable(src, dst)
        return c

    def cost_row(self, src: int) -> np.ndarray:
        """int64 costs from ``src`` to every node (INF_COST if unreachable)."""
        self._check_node(src)
        if self._dist_matrix is not None:
            row = self._dist_matrix[src].astype(np.int64)
            row[row < 0] = INF_COST
            return row
        row = self._row_cache.get(src)
        if row is None:
            row = self._sssp(self._csr, src)
            if len(self._row_cache) >= self._cache_cap:
                self._row_cache.clear()
            self._row_cache[src] = row
        return row

    def cost_col(self, dst: int) -> np.ndarray:
        """int64 costs from every node to ``dst`` (INF_COST if unreachable)."""
        self._check_node(dst)
        if self._dist_matrix is not None:
            col = self._dist_matrix[:, dst].astype(np.int64)
            col[col < 0] = INF_COST
            return col
        col = self._col_cache.get(dst)
        if col is None:
            col = self._sssp(self._csr_rev, dst)
            if len(self._col_cache) >= self._cache_cap:
                self._col_cache.clear()
            self._col_cache[dst] = col
        return col

    def path_nodes(self, src: int, dst: int) -> list[int]:
        """Node sequence of one shortest path, via greedy next-hop descent.

        From each node the next hop is the lowest-id out-neighbor that lies
        on a cost-optimal continuation, so the result is deterministic and
        its edge-weight sum equals ``shortest_cost(src, dst)`` exactly.
        """
        if src == dst:
            return [src]
        col = self.cost_col(dst)
        if col[src] >= INF_COST:
            raise Unreachable(src, dst)
        nodes = [src]
        u = src
        for _ in range(self.n_nodes):
            target = col[u]
            for v, w in self.adj[u]:
                if w + col[v] == target:
                    nodes.append(v)
                    u = v
                    break
            else:
                raise AssertionError(f"next-hop descent stuck at node {u}")
            if u == dst:
                return nodes
        raise AssertionError("next-hop descent exceeded node count")

    # --- internals ---------------------------------------------------------------

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.n_nodes:
            raise KeyError(f"node index {node} out of range [0, {self.n_nodes})")

    def _sssp(self, csr, src: int) -> np.ndarray:
        d = _csgraph_dijkstra(csr, directed=True, indices=src)
        out = np.where(np.isinf(d), float(INF_COST), d).astype(np.int64)
        return out

    def _build_apsp(self) -> None:
        n = self.n_nodes
        dist = np.empty((n, n), dtype=np.int32)
        chunk = max(1, min(n, 512))
        for start in range(0, n, chunk):
            idx = np.arange(start, min(start + chunk, n))
            d = _csgraph_dijkstra(self._csr, directed=True, indices=idx)
            finite = d[~np.isinf(d)]
            if finite.size and finite.max() >= np.iinfo(np.int32).max:
                raise OverflowError("path costs exceed int32 range; network too large "
                                    "for the all-pairs table")
            d[np.isinf(d)] = -1
            dist[start:start + len(idx)] = d.astype(np.int32)
        self._dist_matrix = dist


def _edge_weight(length_m: float, speed_mps: float, mode: WeightMode) -> int:
    if mode is WeightMode.DISTANCE:
        return int(round(length_m * UNITS_PER_M))
    return int(round(length_m / speed_mps * UNITS_PER_S))


def load_network(nodes_file, edges_file, weight_mode: WeightMode | str,
                 apsp_max_nodes: int = 6000) -> RoadNetwork:
    """Load and validate a road network from the two CSV files.

    Duplicate edges (same endpoints) keep the minimum-weight copy. Edge
    endpoints must exist in the node table; node ids may be arbitrary
    integers and are mapped to dense internal indices.
    """
    if isinstance(weight_mode, str):
        weight_mode = WeightMode(weight_mode)

    ext_ids, lats, lons = [], [], []
    seen = set()
    with open(nodes_file, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["node_id", "lat", "lon"]:
            raise MalformedRow(nodes_file, 1, "expected header node_id,lat,lon")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 3:
                raise MalformedRow(nodes_file, line_no, f"expected 3 fields, got {len(row)}")
            try:
                nid = int(row[0])
                lat = float(row[1])
                lon = float(row[2])
            except ValueError as exc:
                raise MalformedRow(nodes_file, line_no, str(exc)) from None
            if nid in seen:
                raise MalformedRow(nodes_file, line_no, f"duplicate node id {nid}")
            seen.add(nid)
            ext_ids.append(nid)
            lats.append(lat)
            lons.append(lon)
    if not ext_ids:
        raise MalformedRow(nodes_file, 1, "node table is empty")

    order = np.argsort(np.asarray(ext_ids, dtype=np.int64), kind="stable")
    ext_sorted = [ext_ids[i] for i in order]
    lat_sorted = [lats[i] for i in order]
    lon_sorted = [lons[i] for i in order]
    ext_to_int = {e: i for i, e in enumerate(ext_sorted)}

    best: dict[tuple[int, int], Edge] = {}
    with open(edges_file, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["from_id", "to_id", "length_m", "speed_mps"]:
            raise MalformedRow(edges_file, 1, "expected header from_id,to_id,length_m,speed_mps")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 4:
                raise MalformedRow(edges_file, line_no, f"expected 4 fields, got {len(row)}")
            try:
                fu = int(row[0])
                fv = int(row[1])
                length_m = float(row[2])
                speed = float(row[3])
            except ValueError as exc:
                raise MalformedRow(edges_file, line_no, str(exc)) from None
            if fu not in ext_to_int:
                raise DanglingEdge(edges_file, line_no, fu)
            if fv not in ext_to_int:
                raise DanglingEdge(edges_file, line_no, fv)
            if fu == fv:
                raise MalformedRow(edges_file, line_no, "self-loop edge")
            if length_m <= 0:
                raise MalformedRow(edges_file, line_no, f"length_m must be > 0, got {length_m}")
            if speed <= 0:
                raise MalformedRow(edges_file, line_no, f"speed_mps must be > 0, got {speed}")
            u, v = ext_to_int[fu], ext_to_int[fv]
            w = _edge_weight(length_m, speed, weight_mode)
            if w <= 0:
                raise MalformedRow(edges_file, line_no, "edge weight rounds to zero")
            e = Edge(u, v, length_m, speed, w, length_m / speed)
            prev = best.get((u, v))
            if prev is None or e.weight < prev.weight:
                best[(u, v)] = e

    return RoadNetwork(ext_sorted, lat_sorted, lon_sorted, list(best.values()),
                       weight_mode, apsp_max_nodes=apsp_max_nodes)
