"""Performance metrics from event traces, emissions, and the load-based
performance predictor.

The event trace is the single source of truth: every figure here is
derived from it alone (the leading RunStarted record carries the run
parameters), so recomputing metrics from a written trace file reproduces
the in-memory results exactly.

The predictor couples mean commitments per vehicle to the service rate
through the system load u (demand-to-supply ratio): commitments = u *
service_rate, and service_rate degrades from 1 by beta * ((commitments -
1) / (capacity - 1)) ** alpha once commitments exceed one passenger per
vehicle. The coupled system is solved by bisection; the fitter recovers
(alpha, beta) from measured (u, service rate) samples by least squares
on the log-transformed branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples, MalformedTrace, NoFixedPoint, NonPositiveInput

DEFAULT_SCALING = {2: (1.8, 1.7), 4: (2.7, 3.5), 6: (2.4, 3.6)}


@dataclass(frozen=True)
class ScalingParams:
    capacity: int
    alpha: float
    beta: float

    @classmethod
    def default(cls, capacity: int) -> "ScalingParams":
        if capacity not in DEFAULT_SCALING:
            raise KeyError(f"no default scaling parameters for capacity {capacity}")
        a, b = DEFAULT_SCALING[capacity]
        return cls(capacity, a, b)


@dataclass
class FitResult:
    params: ScalingParams
    rmse: float
    n_used: int


@dataclass
class Metrics:
    created: int = 0
    rejected: int = 0
    entered_matching: int = 0
    completed: int = 0
    cancelled: int = 0
    still_active: int = 0
    service_rate: float = 1.0
    avg_scheduled_per_vehicle: float = 0.0
    avg_detour_time_s: float = 0.0
    avg_detour_distance_km: float = 0.0
    vehicle_km_total: float = 0.0
    vehicle_km_occupied: float = 0.0
    vehicle_km_empty: float = 0.0
    vehicle_km_reposition: float = 0.0
    avg_revenue_per_vehicle: float = 0.0
    avg_wait_s: float = 0.0
    avg_service_time_s: float = 0.0
    lambda_per_s: float = 0.0
    system_load: float = 0.0
    emissions_total_kg: float = 0.0
    emissions_per_passenger_km_kg: float = 0.0
    passenger_km_served: float = 0.0
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["flags"] = list(self.flags)
        return d


def compute_metrics(events: list[dict]) -> Metrics:
    """Aggregate one run's trace; see the trace schema doc for the fields."""
    if not events or events[0].get("kind") != "RunStarted":
        raise MalformedTrace(1, "trace must start with a RunStarted record")
    meta = events[0]
    n = int(meta["fleet_n"])
    horizon = float(meta["horizon_s"])
    g_per_vkm = float(meta["emission_g_per_vkm"])
    denominator = meta.get("service_denominator", "entered_matching")

    m = Metrics()
    req_created: dict[int, dict] = {}
    req_mode: dict[int, dict] = {}
    waits: list[float] = []
    service_times: list[float] = []
    detour_t: list[float] = []
    detour_d: list[float] = []
    revenue = 0.0
    passenger_km = 0.0
    cum_by_vehicle: dict[int, tuple[float, float, float]] = {}

    # time integral of total commitments (scheduled + onboard) over [0, horizon]
    commit_integral = 0.0
    commitments = 0
    t_prev = 0.0

    def integrate_to(t: float):
        nonlocal commit_integral, t_prev
        t_c = min(t, horizon)
        if t_c > t_prev:
            commit_integral += commitments * (t_c - t_prev)
            t_prev = t_c

    for line_no, ev in enumerate(events[1:], start=2):
        kind = ev.get("kind")
        t = ev.get("t")
        if kind is None or t is None:
            raise MalformedTrace(line_no, "event missing kind or t")
        if kind == "RequestCreated":
            m.created += 1
            req_created[ev["request"]] = ev
        elif kind == "ModeDecided":
            req_mode[ev["request"]] = ev
            if ev["mode"] == "rejected":
                m.rejected += 1
            else:
                m.entered_matching += 1
        elif kind == "Matched":
            integrate_to(t)
            commitments += 1
        elif kind == "PickedUp":
            waits.append(t - req_created[ev["request"]]["t"])
        elif kind == "DroppedOff":
            integrate_to(t)
            commitments -= 1
            m.completed += 1
            revenue += ev["price"]
            created = req_created[ev["request"]]
            passenger_km += created["direct_distance_m"] / 1000.0
            service_times.append(t - ev["matched_t"])
            if req_mode[ev["request"]]["mode"] == "shared":
                detour_t.append(max(0.0, ev["onboard_time_s"] - created["direct_time_s"]))
                detour_d.append(max(0.0, (ev["onboard_distance_m"]
                                          - created["direct_distance_m"]) / 1000.0))
        elif kind == "Cancelled":
            m.cancelled += 1
        elif kind == "VehicleMoved":
            cum_by_vehicle[ev["vehicle"]] = (ev["cum_occupied_m"], ev["cum_empty_m"],
                                             ev["cum_reposition_m"])
        elif kind in ("RepositionStarted", "RunStarted"):
            pass
        else:
            raise MalformedTrace(line_no, f"unknown event kind {kind!r}")
    integrate_to(horizon)

    m.still_active = m.entered_matching - m.completed - m.cancelled

    denom = m.entered_matching if denominator == "entered_matching" else m.created
    if denom == 0:
        m.service_rate = 1.0
        m.flags.append("zero_demand_denominator")
    else:
        m.service_rate = m.completed / denom

    m.avg_scheduled_per_vehicle = commit_integral / (horizon * n)

    for vid in sorted(cum_by_vehicle):
        occ, emp, rep = cum_by_vehicle[vid]
        m.vehicle_km_occupied += occ / 1000.0
        m.vehicle_km_empty += emp / 1000.0
        m.vehicle_km_reposition += rep / 1000.0
    m.vehicle_km_total = (m.vehicle_km_occupied + m.vehicle_km_empty
                          + m.vehicle_km_reposition)

    m.avg_revenue_per_vehicle = revenue / n
    m.avg_wait_s = sum(waits) / len(waits) if waits else 0.0
    if detour_t:
        m.avg_detour_time_s = sum(detour_t) / len(detour_t)
        m.avg_detour_distance_km = sum(detour_d) / len(detour_d)

    m.emissions_total_kg = g_per_vkm * m.vehicle_km_total / 1000.0
    m.passenger_km_served = passenger_km
    if passenger_km > 0:
        m.emissions_per_passenger_km_kg = m.emissions_total_kg / passenger_km
    else:
        m.flags.append("zero_passenger_km")

    if service_times:
        m.avg_service_time_s = sum(service_times) / len(service_times)
        m.lambda_per_s = m.entered_matching / horizon
        m.system_load = system_load(m.lambda_per_s, n, m.avg_service_time_s)
    else:
        m.flags.append("no_completed_requests")
    return m


def system_load(lam: float, n: int, t_bar_s: float) -> float:
    """Demand-to-supply ratio: arrival rate over fleet turnover rate."""
    for name, val in (("lambda", lam), ("N", n), ("t_bar", t_bar_s)):
        if val <= 0:
            raise NonPositiveInput(name, val)
    return lam / (n / t_bar_s)


def predict_performance(u: float, params: ScalingParams,
                        tol: float = 1e-9) -> tuple[float, float]:
    """(service rate, mean commitments per vehicle) at system load ``u``.

    Below saturation (u <= 1) everyone is served. Above it, the service
    rate is the unique fixed point of the degradation law, found by
    bisection to ``tol``.
    """
    if u <= 0:
        raise NonPositiveInput("u", u)
    if params.capacity < 2:
        raise ValueError("scaling law needs capacity >= 2")
    if u <= 1.0:
        return 1.0, u

    def f(r: float) -> float:
        c_bar = u * r
        if c_bar <= 1.0:
            return 1.0 - r
        return 1.0 - params.beta * ((c_bar - 1.0) / (params.capacity - 1.0)) ** params.alpha - r

    lo, hi = 1.0 / u, 1.0
    f_lo, f_hi = f(lo), f(hi)
    if f_lo < 0 or f_hi > 0:
        raise NoFixedPoint(lo, hi, f_lo, f_hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    r = 0.5 * (lo + hi)
    return r, u * r


def fit_scaling(samples: list[tuple[float, float]], capacity: int,
                min_samples: int = 5) -> FitResult:
    """Least-squares (alpha, beta) from measured (u, service rate) pairs.

    Only samples on the degraded branch (u * rate > 1 and rate < 1) pin
    the parameters; fewer than ``min_samples`` such points is an error.
    The reported RMSE evaluates the fitted law on every provided sample.
    """
    xs, ys, ws = [], [], []
    for u, r in samples:
        c_bar = u * r
        if c_bar > 1.0 and 0.0 < r < 1.0:
            xs.append(math.log((c_bar - 1.0) / (capacity - 1.0)))
            ys.append(math.log(1.0 - r))
            ws.append(1.0 - r)   # inverse variance of log(1-r) under noise on r
    if len(xs) < min_samples:
        raise InsufficientSamples(min_samples, len(xs))
    alpha, log_beta = np.polyfit(np.asarray(xs), np.asarray(ys), 1, w=np.asarray(ws))
    params = ScalingParams(capacity, float(alpha), float(math.exp(log_beta)))
    sq = 0.0
    for u, r in samples:
        pred, _ = predict_performance(u, params)
        sq += (pred - r) ** 2
    return FitResult(params, math.sqrt(sq / len(samples)), len(xs))
