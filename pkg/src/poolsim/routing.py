"""Pooled-route construction and feasibility checking.

Routes are built with a fully greedy nearest-neighbor walk over the
pending stops (dropoffs of passengers already on board, pickup/dropoff
pairs for everyone else), then every passenger's detour guarantee is
re-evaluated against the promised bound. ``enumerate_route`` searches all
precedence-valid stop orders exhaustively and is the validation oracle
for the heuristic.

Detours are measured in the network's active weight mode and cover only
the in-vehicle segment; pickup delay is bounded separately by the
cancellation deadline. The feasibility predicate is the exact comparison
``in_vehicle - direct <= ratio * direct`` in this multiply form; trace
replay checks the realized detour with the same expression, so a feasible
route can never violate the replayed bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .demand import Request, Vehicle
from .errors import RequestNotOnRoute, TooManyStops
from .netgraph import RoadNetwork

MAX_ENUM_STOPS = 10


class StopKind(Enum):
    PICKUP = 0
    DROPOFF = 1


@dataclass(frozen=True)
class Stop:
    kind: StopKind
    request_id: int
    node: int


class ViolationKind(Enum):
    DETOUR = "detour"
    CAPACITY = "capacity"
    PRECEDENCE = "precedence"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    request_id: int | None = None


@dataclass
class Route:
    """Stop sequence with exact integer leg costs.

    ``leg_costs[0]`` runs from ``start_node`` to the first stop; leg ``i``
    from stop ``i-1`` to stop ``i``. ``approach_extra`` is the remainder of
    a mid-edge position before ``start_node`` (0 when the vehicle sits at a
    node). ``onboard_base[rid]`` is the cost a passenger already on board
    has accrued by the time the vehicle reaches ``start_node``.
    """

    start_node: int
    stops: list[Stop]
    leg_costs: list[int]
    approach_extra: int = 0
    onboard_base: dict[int, int] = field(default_factory=dict)

    @property
    def total_cost(self) -> int:
        return self.approach_extra + sum(self.leg_costs)

    def in_vehicle_cost(self, request_id: int) -> int:
        """Exact onboard cost units for one passenger over this route."""
        pickup_idx = dropoff_idx = None
        for i, stop in enumerate(self.stops):
            if stop.request_id == request_id:
                if stop.kind is StopKind.PICKUP:
                    pickup_idx = i
                else:
                    dropoff_idx = i
        if dropoff_idx is None:
            raise RequestNotOnRoute(request_id)
        if request_id in self.onboard_base:
            return self.onboard_base[request_id] + sum(self.leg_costs[:dropoff_idx + 1])
        if pickup_idx is None:
            raise RequestNotOnRoute(request_id)
        return sum(self.leg_costs[pickup_idx + 1:dropoff_idx + 1])


@dataclass
class FeasibilityReport:
    feasible: bool
    route: Route | None = None
    violated: Violation | None = None


def detour_ratio(route: Route, req: Request) -> float:
    """Realized in-vehicle detour relative to the direct shortest cost."""
    extra = route.in_vehicle_cost(req.id) - req.direct_cost
    if extra <= 0:
        return 0.0
    return extra / req.direct_cost


def _vehicle_context(net: RoadNetwork, vehicle: Vehicle):
    start = vehicle.pos.next_node
    extra = vehicle.pos.remaining_units(net)
    onboard_base = {}
    in_flight = 0 if vehicle.pos.at_node else net.edge(vehicle.pos.u, vehicle.pos.v).weight
    for rid, accrued in vehicle.onboard_cost.items():
        onboard_base[rid] = accrued + in_flight
    return start, extra, onboard_base


def _gather_stops(vehicle: Vehicle, new_requests, requests):
    """(dropoff-only map for onboard, request map for everyone unpicked)."""
    onboard: dict[int, Request] = {}
    unpicked: dict[int, Request] = {}
    for rid in sorted(vehicle.onboard):
        onboard[rid] = requests[rid]
    for rid in sorted(vehicle.scheduled):
        unpicked[rid] = requests[rid]
    for req in sorted(new_requests, key=lambda r: r.id):
        if req.id in onboard or req.id in unpicked:
            raise ValueError(f"request {req.id} already committed to this vehicle")
        unpicked[req.id] = req
    return onboard, unpicked


def _detour_ok(in_vehicle: int, req: Request) -> bool:
    return in_vehicle - req.direct_cost <= req.max_detour_ratio * req.direct_cost


def nn_route(net: RoadNetwork, vehicle: Vehicle, new_requests,
             requests: dict[int, Request] | None = None) -> FeasibilityReport:
    """Greedy nearest-stop route over the vehicle's commitments plus
    ``new_requests``, with every detour promise re-checked.

    Eligible stops are dropoffs of onboard passengers and pickups of
    unpicked ones (pickups only while a seat is free); a dropoff becomes
    eligible once its pickup is visited. Equidistant stops resolve to the
    lower request id, pickup before dropoff. Infeasibility is reported as
    a value, never raised.
    """
    requests = requests or {}
    onboard, unpicked = _gather_stops(vehicle, new_requests, requests)
    if len(onboard) > vehicle.capacity:
        return FeasibilityReport(False, violated=Violation(ViolationKind.CAPACITY))

    start, extra, onboard_base = _vehicle_context(net, vehicle)
    pending_pick = dict(unpicked)
    pending_drop = {rid: req.destination for rid, req in onboard.items()}
    load = len(onboard)

    stops: list[Stop] = []
    legs: list[int] = []
    current = start
    while pending_pick or pending_drop:
        best = None
        for rid, node in pending_drop.items():
            key = (net.shortest_cost(current, node), rid, StopKind.DROPOFF.value)
            if best is None or key < best[0]:
                best = (key, Stop(StopKind.DROPOFF, rid, node))
        if load < vehicle.capacity:
            for rid, req in pending_pick.items():
                key = (net.shortest_cost(current, req.origin), rid, StopKind.PICKUP.value)
                if best is None or key < best[0]:
                    best = (key, Stop(StopKind.PICKUP, rid, req.origin))
        assert best is not None, "no eligible stop while stops remain"
        (cost, _, _), stop = best
        stops.append(stop)
        legs.append(cost)
        current = stop.node
        if stop.kind is StopKind.PICKUP:
            req = pending_pick.pop(stop.request_id)
            pending_drop[stop.request_id] = req.destination
            load += 1
        else:
            pending_drop.pop(stop.request_id)
            load -= 1

    route = Route(start, stops, legs, extra, onboard_base)
    for rid, req in sorted({**onboard, **unpicked}.items()):
        if not _detour_ok(route.in_vehicle_cost(rid), req):
            return FeasibilityReport(False, violated=Violation(ViolationKind.DETOUR, rid))
    return FeasibilityReport(True, route=route)


def enumerate_route(net: RoadNetwork, vehicle: Vehicle, new_requests,
                    requests: dict[int, Request] | None = None) -> FeasibilityReport:
    """Exhaustive search over precedence-valid stop orders.

    Returns the minimum-total-cost route satisfying every detour bound, or
    infeasible when no order does. Guards against factorial blow-up above
    ``MAX_ENUM_STOPS`` stops.
    """
    requests = requests or {}
    onboard, unpicked = _gather_stops(vehicle, new_requests, requests)
    if len(onboard) > vehicle.capacity:
        return FeasibilityReport(False, violated=Violation(ViolationKind.CAPACITY))
    n_stops = len(onboard) + 2 * len(unpicked)
    if n_stops > MAX_ENUM_STOPS:
        raise TooManyStops(f"{n_stops} stops exceeds enumeration guard of {MAX_ENUM_STOPS}")

    start, extra, onboard_base = _vehicle_context(net, vehicle)
    all_reqs = {**onboard, **unpicked}

    best: dict = {"cost": None, "stops": None, "legs": None}
    first_violation: dict = {"rid": None}

    stops_buf: list[Stop] = []
    legs_buf: list[int] = []

    def record_violation(rid: int) -> None:
        if first_violation["rid"] is None or rid < first_violation["rid"]:
            first_violation["rid"] = rid

    def dfs(current, pending_pick, onboard_now, partial):
        # onboard_now: rid -> accrued in-vehicle cost so far
        if best["cost"] is not None and partial >= best["cost"]:
            return
        if not pending_pick and not onboard_now:
            best["cost"] = partial
            best["stops"] = list(stops_buf)
            best["legs"] = list(legs_buf)
            return
        # dropoffs
        for rid in sorted(onboard_now):
            req = all_reqs[rid]
            leg = net.shortest_cost(current, req.destination)
            total_iv = onboard_now[rid] + leg
            if not _detour_ok(total_iv, req):
                record_violation(rid)
                continue
            nxt = {r: c + leg for r, c in onboard_now.items() if r != rid}
            ok = True
            for r, c in nxt.items():
                if not _detour_ok(c, all_reqs[r]):  # already blown, can only grow
                    record_violation(r)
                    ok = False
                    break
            if not ok:
                continue
            stops_buf.append(Stop(StopKind.DROPOFF, rid, req.destination))
            legs_buf.append(leg)
            dfs(req.destination, pending_pick, nxt, partial + leg)
            stops_buf.pop()
            legs_buf.pop()
        # pickups
        if len(onboard_now) < vehicle.capacity:
            for rid in sorted(pending_pick):
                req = all_reqs[rid]
                leg = net.shortest_cost(current, req.origin)
                nxt = {r: c + leg for r, c in onboard_now.items()}
                ok = True
                for r, c in nxt.items():
                    if not _detour_ok(c, all_reqs[r]):
                        record_violation(r)
                        ok = False
                        break
                if not ok:
                    continue
                nxt[rid] = 0
                rest = {r: q for r, q in pending_pick.items() if r != rid}
                stops_buf.append(Stop(StopKind.PICKUP, rid, req.origin))
                legs_buf.append(leg)
                dfs(req.origin, rest, nxt, partial + leg)
                stops_buf.pop()
                legs_buf.pop()

    dfs(start, dict(unpicked), dict(onboard_base), 0)

    if best["cost"] is None:
        rid = first_violation["rid"]
        return FeasibilityReport(False, violated=Violation(ViolationKind.DETOUR, rid))
    route = Route(start, best["stops"], best["legs"], extra, onboard_base)
    return FeasibilityReport(True, route=route)
