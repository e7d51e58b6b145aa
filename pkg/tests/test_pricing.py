"""Quote arithmetic and acceptance-surface behavior."""

import math

import numpy as np
import pytest

from poolsim.demand import Mode, Request
from poolsim.pricing import GridSurface, LogisticSurface, Tariff, decide_mode, quote


def make_request(direct_km=10.0):
    return Request(0, 0.0, 0, 1, direct_cost=int(direct_km * 1e6),
                   direct_distance_m=direct_km * 1000.0)


def test_quote_zero_discount():
    solo, shared = quote(make_request(10.0), Tariff(2.0, 1.0, 0.0, 0.3))
    assert solo == 12.0 and shared == 12.0


def test_quote_with_discount():
    solo, shared = quote(make_request(10.0), Tariff(2.0, 1.0, 0.2, 0.3))
    assert solo == 12.0
    assert shared == pytest.approx(9.6)


def test_full_discount_rejected():
    with pytest.raises(ValueError):
        Tariff(2.0, 1.0, 1.0, 0.3)


class ConstantSurface:
    def __init__(self, p):
        self.p = p

    def accept_probability(self, discount, detour_ratio):
        return self.p


def test_constant_one_always_shared():
    rng = np.random.default_rng(0)
    tariff = Tariff()
    for _ in range(50):
        req = make_request()
        d = decide_mode(req, tariff, ConstantSurface(1.0), allow_solo=True, rng=rng)
        assert d.mode is Mode.SHARED
        assert req.max_detour_ratio == tariff.offered_detour_ratio


def test_constant_zero_goes_solo_or_reject():
    rng = np.random.default_rng(0)
    for _ in range(50):
        req = make_request()
        d = decide_mode(req, Tariff(), ConstantSurface(0.0), allow_solo=True, rng=rng)
        assert d.mode is Mode.SOLO
        assert req.max_detour_ratio == 0.0
    for _ in range(50):
        req = make_request()
        d = decide_mode(req, Tariff(), ConstantSurface(0.0), allow_solo=False, rng=rng)
        assert d.mode is Mode.REJECTED


def test_logistic_monte_carlo_matches_sigmoid():
    surface = LogisticSurface(0.0, 6.0, 5.0)
    d, delta = 0.2, 0.3
    expected = 1.0 / (1.0 + math.exp(-(6.0 * d - 5.0 * delta)))
    tariff = Tariff(2.0, 1.0, d, delta)
    rng = np.random.default_rng(99)
    n = 100_000
    hits = 0
    req = make_request()
    for _ in range(n):
        dec = decide_mode(req, tariff, surface, allow_solo=True, rng=rng)
        hits += dec.mode is Mode.SHARED
    assert abs(hits / n - expected) <= 0.01


def test_logistic_monotone_on_grid():
    surface = LogisticSurface(0.0, 6.0, 5.0)
    discounts = np.linspace(0, 0.5, 6)
    detours = np.linspace(0, 1.0, 11)
    for d in discounts:
        ps = [surface.accept_probability(d, t) for t in detours]
        assert all(a >= b - 1e-12 for a, b in zip(ps, ps[1:]))
    for t in detours:
        ps = [surface.accept_probability(d, t) for d in discounts]
        assert all(a <= b + 1e-12 for a, b in zip(ps, ps[1:]))


def test_grid_surface_interpolation_and_validation(tmp_path):
    path = tmp_path / "grid.csv"
    with open(path, "w") as f:
        f.write("discount,detour_ratio,p_accept\n")
        for d, dt, p in [(0.0, 0.0, 0.5), (0.0, 1.0, 0.1),
                         (0.5, 0.0, 0.9), (0.5, 1.0, 0.6)]:
            f.write(f"{d},{dt},{p}\n")
    g = GridSurface.from_csv(path)
    assert g.accept_probability(0.0, 0.0) == pytest.approx(0.5)
    assert g.accept_probability(0.25, 0.5) == pytest.approx((0.5 + 0.1 + 0.9 + 0.6) / 4)
    # clamped outside the hull
    assert g.accept_probability(1.0, 2.0) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        GridSurface([0.0, 0.5], [0.0, 1.0], [[0.5, 0.1], [0.4, 0.05]])  # decreasing in discount


def test_per_request_detour_override():
    req = make_request()
    req.detour_override = 0.5
    rng = np.random.default_rng(1)
    d = decide_mode(req, Tariff(), ConstantSurface(1.0), allow_solo=True, rng=rng)
    assert d.mode is Mode.SHARED and req.max_detour_ratio == 0.5
