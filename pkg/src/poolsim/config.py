"""Run configuration: INI-style file, schema validation, overrides.

Sections and keys are fixed by the schema below; unknown keys are errors.
Command-line overrides (``section.key=value``) beat file values. Value
syntax for composite settings is ``name(arg, ...)``: demand sources
``file(requests.csv)``, ``uniform(rate)``, ``hotzones(zones.json, rate)``;
pricing surfaces ``logistic(a0, a_discount, a_detour)`` or ``grid(path)``;
repositioning ``stay``, ``cruise(side_m)``, ``to_waiting``.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field

from .demand import DemandConfig, FileSource, HotZonesSource, Request, UniformSource, load_requests, synthesize_requests
from .engine import SimConfig
from .errors import ConfigError, RangeError, UnknownKey, ValueTypeError
from .matching import MatchingParams
from .netgraph import RoadNetwork, load_network
from .pricing import GridSurface, LogisticSurface, Tariff
from .repositioning import RepositionStrategy, StrategyKind


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# (type, constraint description, validator) per key; None default = required-if-used
_SCHEMA: dict[str, tuple] = {
    "network.nodes": (str, None, None),
    "network.edges": (str, None, None),
    "network.weight_mode": (str, "distance|travel_time",
                            lambda v: v in ("distance", "travel_time")),
    "network.apsp_max_nodes": (int, ">= 0", lambda v: v >= 0),
    "demand.source": (str, None, None),
    "fleet.n": (int, "> 0", lambda v: v > 0),
    "fleet.capacity": (int, "one of 1, 2, 4, 6", lambda v: v in (1, 2, 4, 6)),
    "sim.epoch_length_s": (float, "> 0", lambda v: v > 0),
    "sim.horizon_s": (float, "> 0", lambda v: v > 0),
    "sim.max_wait_s": (float, "> 0", lambda v: v > 0),
    "sim.drain_cap_s": (float, ">= 0", lambda v: v >= 0),
    "sim.allow_solo": (_parse_bool, None, None),
    "sim.seed": (int, None, None),
    "tariff.base_fare": (float, ">= 0", lambda v: v >= 0),
    "tariff.per_km": (float, ">= 0", lambda v: v >= 0),
    "tariff.shared_discount": (float, "in [0, 1)", lambda v: 0 <= v < 1),
    "tariff.offered_detour_ratio": (float, ">= 0", lambda v: v >= 0),
    "pricing.surface": (str, None, None),
    "matching.max_pickup_cost": (int, ">= 0", lambda v: v >= 0),
    "matching.max_combos_per_vehicle": (int, "> 0", lambda v: v > 0),
    "matching.max_vehicles_per_request": (int, "> 0", lambda v: v > 0),
    "matching.cost_per_km": (float, ">= 0", lambda v: v >= 0),
    "matching.cost_per_hour": (float, ">= 0", lambda v: v >= 0),
    "matching.wait_bonus_per_s": (float, ">= 0", lambda v: v >= 0),
    "reposition.strategy": (str, None, None),
    "metrics.emission_g_per_vkm": (float, "> 0", lambda v: v > 0),
    "metrics.service_rate_denominator": (str, "entered_matching|all_created",
                                         lambda v: v in ("entered_matching", "all_created")),
}

_DEFAULTS: dict[str, str] = {
    "network.weight_mode": "distance",
    "network.apsp_max_nodes": "6000",
    "fleet.n": "100",
    "fleet.capacity": "4",
    "sim.epoch_length_s": "30",
    "sim.horizon_s": "3600",
    "sim.max_wait_s": "600",
    "sim.drain_cap_s": "7200",
    "sim.allow_solo": "true",
    "sim.seed": "0",
    "tariff.base_fare": "2.0",
    "tariff.per_km": "1.0",
    "tariff.shared_discount": "0.2",
    "tariff.offered_detour_ratio": "0.3",
    "pricing.surface": "logistic(0, 6, 5)",
    "matching.max_combos_per_vehicle": "200",
    "matching.max_vehicles_per_request": "20",
    "matching.cost_per_km": "0.5",
    "matching.cost_per_hour": "18.0",
    "matching.wait_bonus_per_s": "0",
    "reposition.strategy": "stay",
    "metrics.emission_g_per_vkm": "150",
    "metrics.service_rate_denominator": "entered_matching",
}

_CALL_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def _parse_call(raw: str, key: str) -> tuple[str, list[str]]:
    m = _CALL_RE.match(raw)
    if not m:
        raise ValueTypeError(key, "name(arg, ...)", raw)
    name, args = m.group(1), m.group(2)
    if args is None or not args.strip():
        return name, []
    return name, [a.strip() for a in args.split(",")]


@dataclass
class RunConfig:
    """Validated raw settings plus builders for the run objects."""

    values: dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    # --- builders ---------------------------------------------------------

    def build_network(self) -> RoadNetwork:
        for key in ("network.nodes", "network.edges"):
            if key not in self.values:
                raise ConfigError(f"missing required key {key}")
        return load_network(self.values["network.nodes"], self.values["network.edges"],
                            self.values["network.weight_mode"],
                            apsp_max_nodes=self.values["network.apsp_max_nodes"])

    def build_surface(self):
        name, args = _parse_call(self.values["pricing.surface"], "pricing.surface")
        if name == "logistic":
            if len(args) != 3:
                raise ValueTypeError("pricing.surface", "logistic(a0, a_discount, a_detour)",
                                     self.values["pricing.surface"])
            return LogisticSurface(*(float(a) for a in args))
        if name == "grid":
            if len(args) != 1:
                raise ValueTypeError("pricing.surface", "grid(path)",
                                     self.values["pricing.surface"])
            return GridSurface.from_csv(args[0])
        raise ValueTypeError("pricing.surface", "logistic(...) or grid(path)",
                             self.values["pricing.surface"])

    def build_strategy(self) -> RepositionStrategy:
        name, args = _parse_call(self.values["reposition.strategy"], "reposition.strategy")
        if name == "stay":
            return RepositionStrategy(StrategyKind.STAY)
        if name == "to_waiting":
            return RepositionStrategy(StrategyKind.TO_WAITING)
        if name == "cruise":
            if len(args) != 1:
                raise ValueTypeError("reposition.strategy", "cruise(side_m)",
                                     self.values["reposition.strategy"])
            side = float(args[0])
            if side <= 0:
                raise RangeError("reposition.strategy", "side_m > 0", side)
            return RepositionStrategy(StrategyKind.CRUISE, side)
        raise ValueTypeError("reposition.strategy", "stay | cruise(side_m) | to_waiting",
                             self.values["reposition.strategy"])

    def build_sim_config(self) -> SimConfig:
        v = self.values
        cfg = SimConfig(
            epoch_length_s=v["sim.epoch_length_s"],
            horizon_s=v["sim.horizon_s"],
            max_wait_s=v["sim.max_wait_s"],
            drain_cap_s=v["sim.drain_cap_s"],
            allow_solo=v["sim.allow_solo"],
            fleet_n=v["fleet.n"],
            capacity=v["fleet.capacity"],
            seed=v["sim.seed"],
            tariff=Tariff(v["tariff.base_fare"], v["tariff.per_km"],
                          v["tariff.shared_discount"], v["tariff.offered_detour_ratio"]),
            surface=self.build_surface(),
            reposition=self.build_strategy(),
            matching=MatchingParams(
                max_pickup_cost=v.get("matching.max_pickup_cost"),
                max_combos_per_vehicle=v["matching.max_combos_per_vehicle"],
                max_vehicles_per_request=v["matching.max_vehicles_per_request"],
                cost_per_km=v["matching.cost_per_km"],
                cost_per_hour=v["matching.cost_per_hour"],
                wait_bonus_per_s=v["matching.wait_bonus_per_s"]),
            emission_g_per_vkm=v["metrics.emission_g_per_vkm"],
            service_denominator=v["metrics.service_rate_denominator"],
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise RangeError("sim", str(exc), "") from None
        return cfg

    def build_demand(self, net: RoadNetwork) -> list[Request]:
        raw = self.values.get("demand.source")
        if raw is None:
            raise ConfigError("missing required key demand.source")
        name, args = _parse_call(raw, "demand.source")
        horizon = self.values["sim.horizon_s"]
        seed = self.values["sim.seed"]
        if name == "file":
            if len(args) != 1:
                raise ValueTypeError("demand.source", "file(path)", raw)
            return load_requests(net, args[0], default_max_wait=None)
        if name == "uniform":
            if len(args) != 1:
                raise ValueTypeError("demand.source", "uniform(rate)", raw)
            cfg = DemandConfig(UniformSource(float(args[0])), horizon, seed)
            return synthesize_requests(net, cfg)
        if name == "hotzones":
            if len(args) != 2:
                raise ValueTypeError("demand.source", "hotzones(path, rate)", raw)
            zones, weights = _load_zones(args[0], net)
            cfg = DemandConfig(HotZonesSource(zones, weights, float(args[1])), horizon, seed)
            return synthesize_requests(net, cfg)
        raise ValueTypeError("demand.source", "file(...) | uniform(...) | hotzones(...)", raw)

    def snapshot(self) -> dict:
        return {k: self.values[k] for k in sorted(self.values)}


def _load_zones(path: str, net: RoadNetwork) -> tuple[list[list[int]], list[float]]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, list) or not data:
        raise ConfigError(f"{path}: zones file must be a non-empty JSON array")
    zones, weights = [], []
    for i, entry in enumerate(data):
        try:
            zones.append([net.to_internal(n) for n in entry["nodes"]])
            weights.append(float(entry["weight"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: zone {i}: {exc}") from None
    return zones, weights


def parse_config(path=None, overrides: list[str] = ()) -> RunConfig:
    """Read the INI file (optional), apply defaults and overrides, validate."""
    raw: dict[str, str] = dict(_DEFAULTS)

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                raw[f"{section}.{key}"] = value

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()

    values: dict[str, object] = {}
    for key, text in raw.items():
        if key not in _SCHEMA:
            raise UnknownKey(key)
        caster, constraint, check = _SCHEMA[key]
        try:
            value = text if caster is str else caster(text)
        except ValueError:
            raise ValueTypeError(key, caster.__name__, text) from None
        if check is not None and not check(value):
            raise RangeError(key, constraint, value)
        values[key] = value
    return RunConfig(values)
