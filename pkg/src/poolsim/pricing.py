"""Upfront quotes and the discount/detour acceptance model.

Prices are quoted once per request. The probability that a passenger
accepts the pooled offer comes from an elasticity surface over
(discount, offered detour ratio): either a logistic form or a bilinear
interpolation of a user-supplied grid. Decliners fall back to solo
hailing when that service mode is enabled, otherwise they leave.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .demand import Mode, Request
from .errors import MalformedRow


@dataclass(frozen=True)
class Tariff:
    base_fare: float = 2.0
    per_km: float = 1.0
    shared_discount: float = 0.2
    offered_detour_ratio: float = 0.3

    def __post_init__(self):
        if self.base_fare < 0 or self.per_km < 0:
            raise ValueError("fares must be non-negative")
        if not 0.0 <= self.shared_discount < 1.0:
            raise ValueError(f"shared_discount must be in [0, 1), got {self.shared_discount}")
        if self.offered_detour_ratio < 0:
            raise ValueError("offered_detour_ratio must be >= 0")


class LogisticSurface:
    """P(accept) = sigmoid(a0 + a_discount * d - a_detour * delta)."""

    def __init__(self, a0: float = 0.0, a_discount: float = 6.0, a_detour: float = 5.0):
        if a_discount < 0 or a_detour < 0:
            raise ValueError("elasticity slopes must be >= 0 (monotone surface)")
        self.a0 = a0
        self.a_discount = a_discount
        self.a_detour = a_detour

    def accept_probability(self, discount: float, detour_ratio: float) -> float:
        z = self.a0 + self.a_discount * discount - self.a_detour * detour_ratio
        return 1.0 / (1.0 + math.exp(-z))


class GridSurface:
    """Bilinear interpolation over a complete (discount, detour) lattice.

    Values are clamped to the lattice hull. Monotonicity (non-decreasing
    in discount, non-increasing in detour) is validated at construction.
    """

    def __init__(self, discounts, detours, p_accept):
        self.discounts = np.asarray(discounts, dtype=float)
        self.detours = np.asarray(detours, dtype=float)
        self.p = np.asarray(p_accept, dtype=float)
        if self.p.shape != (len(self.discounts), len(self.detours)):
            raise ValueError("grid shape mismatch")
        if len(self.discounts) < 2 or len(self.detours) < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if np.any(np.diff(self.discounts) <= 0) or np.any(np.diff(self.detours) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ValueError("acceptance probabilities must lie in [0, 1]")
        if np.any(np.diff(self.p, axis=0) < -1e-12):
            raise ValueError("surface must be non-decreasing in discount")
        if np.any(np.diff(self.p, axis=1) > 1e-12):
            raise ValueError("surface must be non-increasing in detour")

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != ["discount", "detour_ratio", "p_accept"]:
                raise MalformedRow(path, 1, "expected header discount,detour_ratio,p_accept")
            for line_no, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1]), float(row[2])))
                except (ValueError, IndexError) as exc:
                    raise MalformedRow(path, line_no, str(exc)) from None
        discounts = sorted({r[0] for r in rows})
        detours = sorted({r[1] for r in rows})
        p = np.full((len(discounts), len(detours)), np.nan)
        di = {v: i for i, v in enumerate(discounts)}
        dj = {v: j for j, v in enumerate(detours)}
        for d, dt, v in rows:
            p[di[d], dj[dt]] = v
        if np.isnan(p).any():
            raise MalformedRow(path, 0, "grid is not a complete lattice")
        return cls(discounts, detours, p)

    def accept_probability(self, discount: float, detour_ratio: float) -> float:
        d = float(np.clip(discount, self.discounts[0], self.discounts[-1]))
        t = float(np.clip(detour_ratio, self.detours[0], self.detours[-1]))
        i = min(int(np.searchsorted(self.discounts, d, side="right")) - 1, len(self.discounts) - 2)
        j = min(int(np.searchsorted(self.detours, t, side="right")) - 1, len(self.detours) - 2)
        fx = (d - self.discounts[i]) / (self.discounts[i + 1] - self.discounts[i])
        fy = (t - self.detours[j]) / (self.detours[j + 1] - self.detours[j])
        p = (self.p[i, j] * (1 - fx) * (1 - fy)
             + self.p[i + 1, j] * fx * (1 - fy)
             + self.p[i, j + 1] * (1 - fx) * fy
             + self.p[i + 1, j + 1] * fx * fy)
        return float(p)


@dataclass(frozen=True)
class ModeDecision:
    request_id: int
    mode: Mode
    quoted_price: float


def quote(req: Request, tariff: Tariff) -> tuple[float, float]:
    """(solo_price, shared_price) for one request; shared = solo * (1 - discount)."""
    solo = tariff.base_fare + tariff.per_km * (req.direct_distance_m / 1000.0)
    return solo, solo * (1.0 - tariff.shared_discount)


def decide_mode(req: Request, tariff: Tariff, surface, allow_solo: bool,
                rng: np.random.Generator) -> ModeDecision:
    """Sample the passenger's choice and stamp price/detour onto the request.

    Accepts the pooled offer with the surface probability at this tariff's
    (discount, offered detour); decliners take solo when enabled, else
    leave the platform. Sampled exactly once, never revisited.
    """
    solo_price, shared_price = quote(req, tariff)
    offered = tariff.offered_detour_ratio if req.detour_override is None else req.detour_override
    p = surface.accept_probability(tariff.shared_discount, offered)
    if rng.uniform() < p:
        req.mode = Mode.SHARED
        req.max_detour_ratio = offered
        req.price = shared_price
        return ModeDecision(req.id, Mode.SHARED, shared_price)
    if allow_solo:
        req.mode = Mode.SOLO
        req.max_detour_ratio = 0.0
        req.price = solo_price
        return ModeDecision(req.id, Mode.SOLO, solo_price)
    req.mode = Mode.REJECTED
    return ModeDecision(req.id, Mode.REJECTED, shared_price)
