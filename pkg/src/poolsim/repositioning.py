"""Idle-vehicle repositioning strategies.

Three strategies: stay in place, cruise a nearby area (uniform target in
the graph ball around the vehicle), or dispatch to waiting passengers by
a min-cost maximum-cardinality bipartite matching on exact integer costs.
The matching is solved by shortest augmenting paths with potentials; the
ILP's literal formulation admits the empty optimum, so the implemented
reading is lexicographic (serve as many waiting passengers as reachable,
then minimize total distance), which matches surplus vehicles staying
put.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .demand import Request, Vehicle
from .netgraph import INF_COST, RoadNetwork, UNITS_PER_M, UNITS_PER_S, WeightMode


class StrategyKind(Enum):
    STAY = "stay"
    CRUISE = "cruise"
    TO_WAITING = "to_waiting"


@dataclass(frozen=True)
class RepositionStrategy:
    kind: StrategyKind
    side_length_m: float = 2000.0  # cruise square side

    def __post_init__(self):
        if self.kind is StrategyKind.CRUISE and self.side_length_m <= 0:
            raise ValueError("cruise side length must be > 0")


@dataclass
class RepositionPlan:
    moves: list[tuple[int, int]]   # (vehicle id, target node)
    total_distance: int            # sum of shortest costs, active units

    def __post_init__(self):
        vids = [v for v, _ in self.moves]
        assert len(vids) == len(set(vids)), "vehicle repeated in plan"


def plan_stay(idle: list[Vehicle]) -> RepositionPlan:
    return RepositionPlan([], 0)


def _cruise_radius_units(net: RoadNetwork, side_length_m: float) -> int:
    half = side_length_m / 2.0
    if net.weight_mode is WeightMode.DISTANCE:
        return int(round(half * UNITS_PER_M))
    speed = net.mean_speed_mps or 1.0
    return int(round(half / speed * UNITS_PER_S))


def plan_cruise(net: RoadNetwork, idle: list[Vehicle], side_length_m: float,
                rng: np.random.Generator) -> RepositionPlan:
    """Uniform target among nodes within half the area side of each vehicle.

    The square area is approximated by the graph ball of that radius in
    the active weight mode. A vehicle whose ball holds only its own node
    stays; targets equal to the current node emit no move.
    """
    radius = _cruise_radius_units(net, side_length_m)
    moves = []
    total = 0
    for veh in sorted(idle, key=lambda v: v.id):
        node = veh.pos.next_node
        row = net.cost_row(node)
        ball = np.flatnonzero(row <= radius)
        target = int(ball[rng.integers(0, len(ball))])
        if target == node:
            continue
        moves.append((veh.id, target))
        total += int(row[target])
    return RepositionPlan(moves, total)


def plan_to_waiting(net: RoadNetwork, idle: list[Vehicle],
                    waiting: list[Request]) -> RepositionPlan:
    """Dispatch idle vehicles to waiting passengers' origins.

    Among all vehicle-passenger matchings of maximum reachable
    cardinality, returns one of minimum total approach cost. Passengers
    waiting at the same node are distinct columns, so one node can
    receive several vehicles. Unreachable pairs are never matched.
    """
    if not idle or not waiting:
        return RepositionPlan([], 0)
    vehicles = sorted(idle, key=lambda v: v.id)
    requests = sorted(waiting, key=lambda r: r.id)
    n_v, n_w = len(vehicles), len(requests)

    cost = np.empty((n_v, n_w), dtype=np.int64)
    extra = np.fromiter((v.pos.remaining_units(net) for v in vehicles),
                        dtype=np.int64, count=n_v)
    next_nodes = np.fromiter((v.pos.next_node for v in vehicles),
                             dtype=np.int64, count=n_v)
    for j, req in enumerate(requests):
        col = net.cost_col(req.origin)
        cost[:, j] = np.where(col[next_nodes] >= INF_COST, INF_COST,
                              col[next_nodes] + extra)

    finite = cost[cost < INF_COST]
    if finite.size == 0:
        return RepositionPlan([], 0)
    # Big-M padding: any matching with fewer unreachable pairs beats any
    # with more, so minimizing the padded sum is exactly lexicographic
    # (cardinality, then distance).
    k = min(n_v, n_w)
    big_m = int(finite.max()) * (k + 1) + 1
    padded = np.where(cost >= INF_COST, big_m, cost)

    transpose = n_v > n_w
    matrix = padded.T.copy() if transpose else padded
    row_to_col = _lap_min_cost(matrix)

    moves = []
    total = 0
    for i, j in enumerate(row_to_col):
        if j < 0:
            continue
        v_idx, w_idx = (j, i) if transpose else (i, j)
        if cost[v_idx, w_idx] >= INF_COST:
            continue  # padded pair: passenger effectively unserved
        moves.append((vehicles[v_idx].id, requests[w_idx].origin))
        total += int(cost[v_idx, w_idx])
    moves.sort()
    return RepositionPlan(moves, total)


def _lap_min_cost(a: np.ndarray) -> np.ndarray:
    """Exact rectangular assignment (rows <= cols) minimizing total cost.

    Shortest augmenting paths with dual potentials over int64 costs; every
    row gets a column. Returns row -> column indices.
    """
    n, m = a.shape
    assert n <= m
    INF = np.iinfo(np.int64).max // 4
    u = np.zeros(n + 1, dtype=np.int64)
    v = np.zeros(m + 1, dtype=np.int64)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF, dtype=np.int64)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            j1 = 0
            cur = a[i0 - 1, :] - u[i0] - v[1:]
            better = ~used[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            free = ~used[1:]
            idx = np.flatnonzero(free)
            j1 = int(idx[np.argmin(minv[1:][idx])]) + 1
            delta = minv[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] > 0:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col
