"""Request stream generation and fleet initialization.

Requests come either from a CSV trip file or from synthetic Poisson
arrivals with uniform or hot-zone origin patterns. Vehicles are placed
according to the empirical origin distribution of the first decision
epoch's requests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DisconnectedDemandNode, MalformedRow
from .netgraph import RoadNetwork, UNITS_PER_M
from .netgraph import WeightMode
from .seeds import derive_rng


class Mode(Enum):
    UNDECIDED = "undecided"
    SOLO = "solo"
    SHARED = "shared"
    REJECTED = "rejected"


class RequestState(Enum):
    WAITING = "waiting"
    ASSIGNED = "assigned"
    ONBOARD = "onboard"
    COMPLETED = "completed"
    CANCELLED = "cancelled"


class VehicleStatus(Enum):
    IDLE = "idle"
    SERVING = "serving"
    REPOSITIONING = "repositioning"


@dataclass
class Request:
    """One passenger booking.

    ``direct_cost`` is the shortest origin->destination cost in the active
    weight mode; ``direct_distance_m`` / ``direct_time_s`` are measured
    along that same shortest path (used for pricing and detour metrics).
    """

    id: int
    t_request: float
    origin: int
    destination: int
    direct_cost: int = 0
    direct_distance_m: float = 0.0
    direct_time_s: float = 0.0
    mode: Mode = Mode.UNDECIDED
    max_detour_ratio: float = 0.0
    max_wait: float | None = None          # None -> simulation default
    detour_override: float | None = None   # per-request offered detour
    price: float = 0.0
    state: RequestState = RequestState.WAITING


@dataclass
class Position:
    """Edge progress: at a node when u == v (fraction 0)."""

    u: int
    v: int
    frac: float = 0.0

    @property
    def at_node(self) -> bool:
        return self.u == self.v

    @property
    def next_node(self) -> int:
        return self.v

    def remaining_units(self, net: RoadNetwork) -> int:
        """Cost units left to reach ``next_node`` (0 when at a node)."""
        if self.at_node:
            return 0
        w = net.edge(self.u, self.v).weight
        return int(round(w * (1.0 - self.frac)))


@dataclass
class Vehicle:
    """Fleet agent; mutable runtime state owned by the engine."""

    id: int
    capacity: int
    pos: Position
    onboard: set[int] = field(default_factory=set)
    scheduled: set[int] = field(default_factory=set)
    plan: list = field(default_factory=list)      # engine leg plan
    path_i: int = 0                                # index within current leg path
    status: VehicleStatus = VehicleStatus.IDLE
    # per-onboard-request accrual since pickup (exact cost units; floats for metrics)
    onboard_cost: dict[int, int] = field(default_factory=dict)
    onboard_dist_m: dict[int, float] = field(default_factory=dict)
    pickup_t: dict[int, float] = field(default_factory=dict)
    # cumulative odometer split (meters)
    dist_occupied_m: float = 0.0
    dist_empty_m: float = 0.0
    dist_reposition_m: float = 0.0

    @property
    def committed(self) -> int:
        return len(self.onboard) + len(self.scheduled)

    @property
    def is_stationary_idle(self) -> bool:
        return self.status is VehicleStatus.IDLE and not self.plan


@dataclass
class UniformSource:
    rate: float  # requests / second


@dataclass
class HotZonesSource:
    zones: list[list[int]]     # node-id subsets (internal ids)
    weights: list[float]       # sums to 1
    rate: float


@dataclass
class FileSource:
    path: str


@dataclass
class DemandConfig:
    source: UniformSource | HotZonesSource | FileSource
    horizon_s: float
    seed: int = 0

    def validate(self, net: RoadNetwork) -> None:
        if self.horizon_s <= 0:
            raise ValueError(f"demand horizon must be > 0, got {self.horizon_s}")
        src = self.source
        if isinstance(src, (UniformSource, HotZonesSource)) and src.rate <= 0:
            raise ValueError(f"demand rate must be > 0, got {src.rate}")
        if isinstance(src, HotZonesSource):
            if len(src.zones) != len(src.weights) or not src.zones:
                raise ValueError("hot zones and weights must be non-empty and aligned")
            if abs(sum(src.weights) - 1.0) > 1e-9:
                raise ValueError(f"zone weights must sum to 1, got {sum(src.weights)}")
            main = _main_scc(net)
            for zone in src.zones:
                for nid in zone:
                    if net.scc_labels[nid] != main:
                        raise DisconnectedDemandNode(nid, "hot zone outside main component")


def _main_scc(net: RoadNetwork) -> int:
    labels, counts = np.unique(net.scc_labels, return_counts=True)
    return int(labels[np.argmax(counts)])


def _scc_nodes(net: RoadNetwork) -> np.ndarray:
    return np.flatnonzero(net.scc_labels == _main_scc(net))


def _finalize(net: RoadNetwork, req: Request) -> None:
    """Fill direct cost/distance/time along the active-mode shortest path."""
    req.direct_cost = net.shortest_cost(req.origin, req.destination)
    if net.weight_mode is WeightMode.DISTANCE:
        req.direct_distance_m = req.direct_cost / UNITS_PER_M
        nodes = net.path_nodes(req.origin, req.destination)
        req.direct_time_s = sum(net.edge(a, b).time_s for a, b in zip(nodes, nodes[1:]))
    else:
        nodes = net.path_nodes(req.origin, req.destination)
        req.direct_distance_m = sum(net.edge(a, b).length_m for a, b in zip(nodes, nodes[1:]))
        req.direct_time_s = req.direct_cost / UNITS_PER_S


def load_requests(net: RoadNetwork, file, default_max_wait: float | None = None) -> list[Request]:
    """Read a requests CSV, sort by (time, id), and fill direct costs.

    Required columns: ``request_id,t_request_s,origin_node,dest_node``.
    Optional ``max_detour_ratio`` and ``max_wait_s`` columns override the
    run defaults per request. Input rows need not be time-sorted.
    """
    requests: list[Request] = []
    seen_ids = set()
    with open(file, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise MalformedRow(file, 1, "empty file, expected header")
        header = [h.strip() for h in header]
        required = ["request_id", "t_request_s", "origin_node", "dest_node"]
        if header[:4] != required:
            raise MalformedRow(file, 1, f"expected header {','.join(required)}")
        col = {name: i for i, name in enumerate(header)}
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 4:
                raise MalformedRow(file, line_no, f"expected >= 4 fields, got {len(row)}")
            try:
                rid = int(row[col["request_id"]])
                t = float(row[col["t_request_s"]])
                origin_ext = int(row[col["origin_node"]])
                dest_ext = int(row[col["dest_node"]])
            except ValueError as exc:
                raise MalformedRow(file, line_no, str(exc)) from None
            if rid in seen_ids:
                raise MalformedRow(file, line_no, f"duplicate request id {rid}")
            seen_ids.add(rid)
            if t < 0:
                raise MalformedRow(file, line_no, f"t_request_s must be >= 0, got {t}")
            try:
                origin = net.to_internal(origin_ext)
                dest = net.to_internal(dest_ext)
            except KeyError as exc:
                raise MalformedRow(file, line_no, f"unknown node id {exc.args[0]}") from None
            if origin == dest:
                raise MalformedRow(file, line_no, "origin equals destination")
            req = Request(rid, t, origin, dest, max_wait=default_max_wait)
            if "max_detour_ratio" in col and len(row) > col["max_detour_ratio"] and row[col["max_detour_ratio"]].strip():
                req.detour_override = float(row[col["max_detour_ratio"]])
            if "max_wait_s" in col and len(row) > col["max_wait_s"] and row[col["max_wait_s"]].strip():
                req.max_wait = float(row[col["max_wait_s"]])
            requests.append(req)

    main = _main_scc(net)
    for req in requests:
        for nid in (req.origin, req.destination):
            if net.scc_labels[nid] != main:
                raise DisconnectedDemandNode(int(net.node_ids[nid]))
    requests.sort(key=lambda r: (r.t_request, r.id))
    for req in requests:
        _finalize(net, req)
    return requests


def synthesize_requests(net: RoadNetwork, cfg: DemandConfig) -> list[Request]:
    """Poisson arrivals over the horizon with the configured origin pattern.

    Fully determined by ``cfg.seed``: arrivals, origins, and destinations
    each draw from an independent labeled sub-stream.
    """
    cfg.validate(net)
    rng_arr = derive_rng(cfg.seed, "arrivals")
    rng_o = derive_rng(cfg.seed, "origins")
    rng_d = derive_rng(cfg.seed, "destinations")

    src = cfg.source
    if isinstance(src, FileSource):
        raise ValueError("synthesize_requests needs a synthetic source; use load_requests for files")

    n = int(rng_arr.poisson(src.rate * cfg.horizon_s))
    # arrival times in (0, horizon]
    times = np.sort(cfg.horizon_s - rng_arr.uniform(0.0, cfg.horizon_s, size=n))

    pool = _scc_nodes(net)
    if isinstance(src, UniformSource):
        origins = pool[rng_o.integers(0, len(pool), size=n)]
    else:
        zone_idx = rng_o.choice(len(src.zones), size=n, p=np.asarray(src.weights) / sum(src.weights))
        origins = np.empty(n, dtype=np.int64)
        for i, z in enumerate(zone_idx):
            zone = src.zones[int(z)]
            origins[i] = zone[int(rng_o.integers(0, len(zone)))]

    requests = []
    for i in range(n):
        origin = int(origins[i])
        dest = origin
        while dest == origin:
            dest = int(pool[rng_d.integers(0, len(pool))])
        requests.append(Request(i, float(times[i]), origin, dest))
    for req in requests:
        _finalize(net, req)
    return requests


def init_fleet(net: RoadNetwork, n: int, capacity: int, requests: list[Request],
               seed: int, epoch_length_s: float = 30.0) -> list[Vehicle]:
    """Place ``n`` idle vehicles by sampling first-epoch request origins.

    Falls back to all-stream origins when the first epoch is empty, and to
    a uniform draw over the main component when the stream is empty.
    Vehicles spawn at nodes, never mid-edge.
    """
    if n <= 0:
        raise ValueError(f"fleet size must be > 0, got {n}")
    if capacity not in (1, 2, 4, 6):
        raise ValueError(f"capacity must be one of 1, 2, 4, 6, got {capacity}")
    rng = derive_rng(seed, "fleet")
    first_epoch = [r.origin for r in requests if r.t_request <= epoch_length_s]
    source = first_epoch or [r.origin for r in requests]
    if source:
        nodes = [source[int(i)] for i in rng.integers(0, len(source), size=n)]
    else:
        pool = _scc_nodes(net)
        nodes = [int(pool[i]) for i in rng.integers(0, len(pool), size=n)]
    return [Vehicle(i, capacity, Position(node, node)) for i, node in enumerate(nodes)]
