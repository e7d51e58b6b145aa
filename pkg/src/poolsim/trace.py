"""Event-trace serialization, replay aggregation, and plot-data export.

Traces are JSON lines, one event per line with sorted keys, so identical
runs produce byte-identical files. The first line is the RunStarted
record carrying the run parameters needed to recompute metrics.
"""

from __future__ import annotations

import gzip
import hashlib
import json

from .errors import MalformedTrace

PLOT_HEADER = ("epoch,t_s,waiting,assigned,onboard,completed,cancelled,"
               "idle_vehicles,occupied_vehicles,vmt_km")


def dumps_event(ev: dict) -> str:
    return json.dumps(ev, sort_keys=True, separators=(",", ":"))


def write_trace(events: list[dict], path, compress: bool = False) -> None:
    opener = gzip.open if compress else open
    with opener(path, "wt", encoding="utf-8") as f:
        for ev in events:
            f.write(dumps_event(ev))
            f.write("\n")


def read_trace(path) -> list[dict]:
    text_opener = gzip.open if str(path).endswith(".gz") else open
    events = []
    with text_opener(path, "rt", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedTrace(line_no, str(exc)) from None
            if not isinstance(ev, dict) or "kind" not in ev or "t" not in ev:
                raise MalformedTrace(line_no, "event must be an object with kind and t")
            events.append(ev)
    if not events:
        raise MalformedTrace(1, "empty trace")
    return events


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def export_plot_rows(events: list[dict]) -> list[str]:
    """Per-epoch aggregate rows (the documented plot CSV schema).

    Events at exactly an epoch boundary attribute to the earlier epoch,
    matching the engine's decision timing.
    """
    if not events or events[0].get("kind") != "RunStarted":
        raise MalformedTrace(1, "trace must start with a RunStarted record")
    meta = events[0]
    epoch_len = float(meta["epoch_length_s"])
    n = int(meta["fleet_n"])

    waiting = set()
    assigned = set()
    onboard = set()
    completed = 0
    cancelled = 0
    veh_onboard: dict[int, int] = {}
    veh_committed: dict[int, int] = {}
    veh_repositioning: dict[int, bool] = {}
    veh_vmt: dict[int, float] = {}

    rows = []
    epoch = 0

    def snapshot(epoch_idx: int):
        t_s = (epoch_idx + 1) * epoch_len
        occupied = sum(1 for c in veh_onboard.values() if c > 0)
        repositioning = sum(1 for vid, flag in veh_repositioning.items()
                            if flag and veh_committed.get(vid, 0) == 0)
        idle = n - sum(1 for c in veh_committed.values() if c > 0) - repositioning
        vmt = sum(veh_vmt.values()) / 1000.0
        rows.append(f"{epoch_idx},{t_s:g},{len(waiting)},{len(assigned)},{len(onboard)},"
                    f"{completed},{cancelled},{idle},{occupied},{vmt:.6f}")

    for ev in events[1:]:
        while ev["t"] > (epoch + 1) * epoch_len + 1e-9:
            snapshot(epoch)
            epoch += 1
        kind = ev["kind"]
        rid = ev.get("request")
        vid = ev.get("vehicle")
        if kind == "ModeDecided":
            if ev["mode"] != "rejected":
                waiting.add(rid)
        elif kind == "Matched":
            waiting.discard(rid)
            assigned.add(rid)
            veh_committed[vid] = veh_committed.get(vid, 0) + 1
            veh_repositioning[vid] = False
        elif kind == "PickedUp":
            assigned.discard(rid)
            onboard.add(rid)
            veh_onboard[vid] = veh_onboard.get(vid, 0) + 1
        elif kind == "DroppedOff":
            onboard.discard(rid)
            completed += 1
            veh_onboard[vid] -= 1
            veh_committed[vid] -= 1
        elif kind == "Cancelled":
            waiting.discard(rid)
            cancelled += 1
        elif kind == "RepositionStarted":
            veh_repositioning[vid] = True
        elif kind == "VehicleMoved":
            veh_repositioning[vid] = ev["status"] == "repositioning"
            veh_vmt[vid] = (ev["cum_occupied_m"] + ev["cum_empty_m"]
                            + ev["cum_reposition_m"])
    snapshot(epoch)
    return [PLOT_HEADER] + rows


def export_position_rows(events: list[dict], net, interval_epochs: int = 1) -> list[str]:
    """Per-vehicle end-of-epoch position samples with interpolated lat/lon."""
    if not events or events[0].get("kind") != "RunStarted":
        raise MalformedTrace(1, "trace must start with a RunStarted record")
    rows = ["t_s,vehicle,node_u,node_v,frac,lat,lon,status"]
    epoch_len = float(events[0]["epoch_length_s"])
    for ev in events[1:]:
        if ev["kind"] != "VehicleMoved":
            continue
        epoch_idx = int(round(ev["t"] / epoch_len)) - 1
        if epoch_idx % interval_epochs:
            continue
        u, v, frac = ev["u"], ev["v"], ev["frac"]
        lat = net.lat[u] * (1 - frac) + net.lat[v] * frac
        lon = net.lon[u] * (1 - frac) + net.lon[v] * frac
        rows.append(f"{ev['t']:g},{ev['vehicle']},{u},{v},{frac:.6f},"
                    f"{lat:.7f},{lon:.7f},{ev['status']}")
    return rows
