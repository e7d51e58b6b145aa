"""Discrete-epoch simulation loop.

Each epoch: (1) price and admit the epoch's new requests, (2) integrate
vehicle movement at per-edge speeds, firing pickup/dropoff events at stop
nodes, (3) cancel passengers whose wait exceeded their deadline, (4)
build candidate trips and solve the assignment, installing the winning
routes wholesale, (5) reposition the remaining idle vehicles. After the
demand horizon the loop drains: no new requests arrive, matching keeps
running for already-admitted passengers, and vehicles finish their
routes (bounded by a drain cap; anything still active is tallied, never
silently dropped).

Runs are deterministic: one root seed feeds labeled sub-streams, vehicles
are processed in id order, and every epoch's event batch is sorted by
(time, stage, entity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .demand import Mode, Position, Request, RequestState, Vehicle, VehicleStatus, init_fleet
from .matching import MatchingParams, build_candidates, solve_assignment
from .netgraph import RoadNetwork
from .pricing import LogisticSurface, Tariff, decide_mode
from .repositioning import RepositionStrategy, StrategyKind, plan_cruise, plan_stay, plan_to_waiting
from .routing import Route, Stop, StopKind
from .seeds import derive_rng

# within-epoch event ordering: primary time, then pipeline stage
_STAGE_RANK = {
    "RunStarted": -1,
    "RequestCreated": 0,
    "ModeDecided": 1,
    "PickedUp": 2,
    "DroppedOff": 3,
    "VehicleMoved": 4,
    "Cancelled": 5,
    "Matched": 6,
    "RepositionStarted": 7,
}


@dataclass
class SimConfig:
    epoch_length_s: float = 30.0
    horizon_s: float = 3600.0
    max_wait_s: float = 600.0
    drain_cap_s: float = 7200.0
    allow_solo: bool = True
    fleet_n: int = 100
    capacity: int = 4
    seed: int = 0
    tariff: Tariff = field(default_factory=Tariff)
    surface: object = field(default_factory=LogisticSurface)
    reposition: RepositionStrategy = field(
        default_factory=lambda: RepositionStrategy(StrategyKind.STAY))
    matching: MatchingParams = field(default_factory=MatchingParams)
    emission_g_per_vkm: float = 150.0
    service_denominator: str = "entered_matching"   # or "all_created"

    def validate(self) -> None:
        if self.epoch_length_s <= 0:
            raise ValueError("epoch_length_s must be > 0")
        n_epochs = self.horizon_s / self.epoch_length_s
        if self.horizon_s <= 0 or abs(n_epochs - round(n_epochs)) > 1e-9:
            raise ValueError("horizon_s must be a positive multiple of epoch_length_s")
        if self.max_wait_s <= 0:
            raise ValueError("max_wait_s must be > 0")
        if self.drain_cap_s < 0:
            raise ValueError("drain_cap_s must be >= 0")
        if self.fleet_n <= 0:
            raise ValueError("fleet_n must be > 0")
        if self.capacity not in (1, 2, 4, 6):
            raise ValueError("capacity must be one of 1, 2, 4, 6")
        if self.emission_g_per_vkm <= 0:
            raise ValueError("emission_g_per_vkm must be > 0")
        if self.service_denominator not in ("entered_matching", "all_created"):
            raise ValueError("service_denominator must be entered_matching or all_created")


@dataclass
class Leg:
    path: list[int]
    stop: Stop | None   # None: repositioning move


@dataclass
class Tallies:
    created: int = 0
    rejected: int = 0
    entered_matching: int = 0
    completed: int = 0
    cancelled: int = 0
    still_active: int = 0
    epochs_run: int = 0


class Simulation:
    """Owns world state; modules see read-only views and return plans."""

    def __init__(self, cfg: SimConfig, net: RoadNetwork, demand: list[Request]):
        cfg.validate()
        self.cfg = cfg
        self.net = net
        self.clock = 0.0
        self.demand = [r for r in sorted(demand, key=lambda r: (r.t_request, r.id))
                       if r.t_request <= cfg.horizon_s]
        self.requests: dict[int, Request] = {}
        self.pending: dict[int, Request] = {}
        self.vehicles = init_fleet(net, cfg.fleet_n, cfg.capacity, self.demand,
                                   cfg.seed, cfg.epoch_length_s)
        self.events: list[dict] = []
        self.tallies = Tallies()
        self._rng_pricing = derive_rng(cfg.seed, "pricing")
        self._rng_cruise = derive_rng(cfg.seed, "cruise")
        self._match_t: dict[int, float] = {}
        self.instance_dump: list[dict] | None = None   # set by CLI debug flag

        self.events.append({
            "t": 0.0, "kind": "RunStarted",
            "fleet_n": cfg.fleet_n, "capacity": cfg.capacity,
            "horizon_s": cfg.horizon_s, "epoch_length_s": cfg.epoch_length_s,
            "max_wait_s": cfg.max_wait_s, "seed": cfg.seed,
            "weight_mode": net.weight_mode.value,
            "emission_g_per_vkm": cfg.emission_g_per_vkm,
            "service_denominator": cfg.service_denominator,
            "allow_solo": cfg.allow_solo,
        })

    # --- epoch pipeline -----------------------------------------------------

    def step_epoch(self, new_requests: list[Request]) -> list[dict]:
        t0 = self.clock
        t1 = t0 + self.cfg.epoch_length_s
        batch: list[dict] = []
        self.net.refresh_weights(t0)

        self._admit(new_requests, batch)
        self._move_all(t0, t1, batch)
        self._cancel_overdue(t1, batch)
        self._match(t1, batch)
        if self.clock < self.cfg.horizon_s:
            self._reposition(t1, batch)

        batch.sort(key=_event_order)
        self.events.extend(batch)
        self.clock = t1
        self.tallies.epochs_run += 1
        self.net.end_epoch()
        return batch

    def _admit(self, new_requests, batch):
        for req in sorted(new_requests, key=lambda r: (r.t_request, r.id)):
            self.requests[req.id] = req
            self.tallies.created += 1
            if req.max_wait is None:
                req.max_wait = self.cfg.max_wait_s
            batch.append({"t": req.t_request, "kind": "RequestCreated",
                          "request": req.id, "origin": req.origin,
                          "destination": req.destination,
                          "direct_cost": req.direct_cost,
                          "direct_distance_m": req.direct_distance_m,
                          "direct_time_s": req.direct_time_s})
            decide_mode(req, self.cfg.tariff, self.cfg.surface,
                        self.cfg.allow_solo, self._rng_pricing)
            batch.append({"t": req.t_request, "kind": "ModeDecided",
                          "request": req.id, "mode": req.mode.value,
                          "price": req.price,
                          "max_detour_ratio": req.max_detour_ratio,
                          "max_wait_s": req.max_wait})
            if req.mode is Mode.REJECTED:
                self.tallies.rejected += 1
                req.state = RequestState.CANCELLED
                continue
            self.tallies.entered_matching += 1
            self.pending[req.id] = req

    # --- movement -----------------------------------------------------------

    def _move_all(self, t0, t1, batch):
        for veh in self.vehicles:
            moved = self._advance(veh, t0, t1 - t0, batch)
            if moved:
                batch.append({"t": t1, "kind": "VehicleMoved", "vehicle": veh.id,
                              "u": veh.pos.u, "v": veh.pos.v, "frac": veh.pos.frac,
                              "status": veh.status.value,
                              "cum_occupied_m": veh.dist_occupied_m,
                              "cum_empty_m": veh.dist_empty_m,
                              "cum_reposition_m": veh.dist_reposition_m})

    def _advance(self, veh: Vehicle, t0: float, duration: float, batch) -> bool:
        t = t0
        remaining = duration
        moved = False
        while True:
            if veh.pos.at_node:
                if not veh.plan:
                    break
                leg = veh.plan[0]
                if veh.path_i >= len(leg.path) - 1:
                    self._arrive(veh, t, leg, batch)
                    veh.plan.pop(0)
                    veh.path_i = 0
                    continue
                if remaining <= 1e-12:
                    break   # stay at the node; do not commit to the next edge
                veh.pos = Position(leg.path[veh.path_i], leg.path[veh.path_i + 1], 0.0)
            if remaining <= 1e-12:
                break
            edge = self.net.edge(veh.pos.u, veh.pos.v)
            left_s = edge.time_s * (1.0 - veh.pos.frac)
            if remaining + 1e-12 >= left_s:
                meters = edge.length_m * (1.0 - veh.pos.frac)
                self._log_distance(veh, meters)
                for rid in veh.onboard:
                    veh.onboard_cost[rid] += edge.weight
                    veh.onboard_dist_m[rid] += meters
                t += left_s
                remaining -= left_s
                veh.pos = Position(veh.pos.v, veh.pos.v, 0.0)
                veh.path_i += 1
                moved = True
            else:
                dfrac = remaining / edge.time_s
                meters = edge.length_m * dfrac
                self._log_distance(veh, meters)
                for rid in veh.onboard:
                    veh.onboard_dist_m[rid] += meters
                veh.pos = Position(veh.pos.u, veh.pos.v, veh.pos.frac + dfrac)
                t += remaining
                remaining = 0.0
                moved = True
                break
        return moved

    def _log_distance(self, veh, meters):
        if veh.onboard:
            veh.dist_occupied_m += meters
        elif veh.status is VehicleStatus.REPOSITIONING:
            veh.dist_reposition_m += meters
        else:
            veh.dist_empty_m += meters

    def _arrive(self, veh, t, leg: Leg, batch):
        stop = leg.stop
        if stop is None:
            if len(veh.plan) == 1:
                veh.status = VehicleStatus.IDLE
            return
        req = self.requests[stop.request_id]
        if stop.kind is StopKind.PICKUP:
            assert len(veh.onboard) < veh.capacity, \
                f"capacity breach: vehicle {veh.id} at t={t} ({veh.onboard})"
            veh.scheduled.discard(req.id)
            veh.onboard.add(req.id)
            veh.onboard_cost[req.id] = 0
            veh.onboard_dist_m[req.id] = 0.0
            veh.pickup_t[req.id] = t
            req.state = RequestState.ONBOARD
            batch.append({"t": t, "kind": "PickedUp", "request": req.id,
                          "vehicle": veh.id, "node": stop.node})
        else:
            veh.onboard.discard(req.id)
            req.state = RequestState.COMPLETED
            self.tallies.completed += 1
            batch.append({"t": t, "kind": "DroppedOff", "request": req.id,
                          "vehicle": veh.id, "node": stop.node,
                          "onboard_cost": veh.onboard_cost.pop(req.id),
                          "onboard_distance_m": veh.onboard_dist_m.pop(req.id),
                          "onboard_time_s": t - veh.pickup_t.pop(req.id),
                          "price": req.price,
                          "matched_t": self._match_t[req.id]})
        if len(veh.plan) == 1 and not veh.onboard and not veh.scheduled:
            veh.status = VehicleStatus.IDLE

    # --- cancellation ---------------------------------------------------------

    def _cancel_overdue(self, t1, batch):
        for rid in sorted(self.pending):
            req = self.pending[rid]
            waited = t1 - req.t_request
            if waited > req.max_wait:
                req.state = RequestState.CANCELLED
                self.tallies.cancelled += 1
                del self.pending[rid]
                batch.append({"t": t1, "kind": "Cancelled", "request": rid,
                              "waited_s": waited})

    # --- matching ---------------------------------------------------------------

    def _match(self, t1, batch):
        if not self.pending:
            return
        pending = [self.pending[rid] for rid in sorted(self.pending)]
        candidates = build_candidates(self.net, self.vehicles, pending,
                                      self.cfg.matching, self.requests,
                                      self.cfg.max_wait_s, t1)
        if self.instance_dump is not None:
            for i, c in enumerate(candidates):
                self.instance_dump.append({"t": t1, "candidate": i,
                                           "vehicle": c.vehicle,
                                           "requests": list(c.trip.requests),
                                           "utility": c.utility})
        if not candidates:
            return
        assignment = solve_assignment(candidates)
        veh_by_id = {v.id: v for v in self.vehicles}
        for vid, trip in sorted(assignment.pairs, key=lambda p: p[0]):
            veh = veh_by_id[vid]
            for rid in trip.requests:
                req = self.pending.pop(rid)
                req.state = RequestState.ASSIGNED
                veh.scheduled.add(rid)
                self._match_t[rid] = t1
                batch.append({"t": t1, "kind": "Matched", "request": rid,
                              "vehicle": vid})
            self._install_route(veh, trip.route)
            veh.status = VehicleStatus.SERVING

    def _install_route(self, veh: Vehicle, route: Route):
        legs = []
        cur = route.start_node
        for stop in route.stops:
            legs.append(Leg(self.net.path_nodes(cur, stop.node), stop))
            cur = stop.node
        veh.plan = legs
        veh.path_i = 0

    # --- repositioning -------------------------------------------------------------

    def _reposition(self, t1, batch):
        kind = self.cfg.reposition.kind
        if kind is StrategyKind.STAY:
            return
        stationary = [v for v in self.vehicles if v.is_stationary_idle]
        if kind is StrategyKind.CRUISE:
            plan = plan_cruise(self.net, stationary, self.cfg.reposition.side_length_m,
                               self._rng_cruise)
        else:
            pool = stationary + [v for v in self.vehicles
                                 if v.status is VehicleStatus.REPOSITIONING]
            waiting = [self.pending[rid] for rid in sorted(self.pending)]
            if not waiting:
                return
            plan = plan_to_waiting(self.net, sorted(pool, key=lambda v: v.id), waiting)
        veh_by_id = {v.id: v for v in self.vehicles}
        for vid, target in sorted(plan.moves):
            veh = veh_by_id[vid]
            start = veh.pos.next_node
            veh.plan = [Leg(self.net.path_nodes(start, target), None)]
            veh.path_i = 0
            veh.status = VehicleStatus.REPOSITIONING
            batch.append({"t": t1, "kind": "RepositionStarted", "vehicle": vid,
                          "target": target,
                          "cost": int(veh.pos.remaining_units(self.net)
                                      + self.net.shortest_cost(start, target))})

    # --- run loop ----------------------------------------------------------------

    def run(self) -> list[dict]:
        cfg = self.cfg
        n_epochs = int(round(cfg.horizon_s / cfg.epoch_length_s))
        buckets: list[list[Request]] = [[] for _ in range(n_epochs)]
        for req in self.demand:
            idx = 0 if req.t_request <= 0 else math.ceil(req.t_request / cfg.epoch_length_s) - 1
            buckets[min(idx, n_epochs - 1)].append(req)
        for bucket in buckets:
            self.step_epoch(bucket)
        while self.clock < cfg.horizon_s + cfg.drain_cap_s and self._work_left():
            self.step_epoch([])
        self.tallies.still_active = sum(
            1 for r in self.requests.values()
            if r.state in (RequestState.WAITING, RequestState.ASSIGNED, RequestState.ONBOARD))
        return self.events

    def _work_left(self) -> bool:
        if self.pending:
            return True
        return any(v.onboard or v.scheduled for v in self.vehicles)


def run(cfg: SimConfig, net: RoadNetwork, demand: list[Request]) -> tuple[Simulation, list[dict]]:
    """Convenience wrapper: build the simulation, run it, return both."""
    sim = Simulation(cfg, net, demand)
    events = sim.run()
    return sim, events


def _event_order(ev: dict):
    return (ev["t"], _STAGE_RANK[ev["kind"]],
            ev.get("request", -1), ev.get("vehicle", -1))
