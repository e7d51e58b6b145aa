"""Batch command-line interface.

Subcommands: ``simulate`` (run and write trace + metrics + manifest),
``predict`` (scaling-law operating points), ``fit`` (recover scaling
parameters from measured samples), ``replay`` (recompute metrics from a
trace and optionally compare), ``export-plot`` (per-epoch aggregates and
position samples as CSV), ``validate`` (check input files only).

Exit codes: 0 success, 2 usage, 3 configuration error, 4 input-data
error, 5 trace error or replay mismatch, 6 output directory locked.
All file writes go through a temp-then-rename so output is never partial.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig, parse_config
from .engine import Simulation
from .errors import ConfigError, DataError, MalformedTrace, PoolsimError
from .metrics import ScalingParams, compute_metrics, fit_scaling, predict_performance
from .trace import (
    export_plot_rows,
    export_position_rows,
    read_trace,
    sha256_file,
    write_trace,
)

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_TRACE = 5
EXIT_LOCK = 6


class OutputLocked(PoolsimError):
    pass


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class _Lock:
    def __init__(self, out_dir: Path):
        self.path = out_dir / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLocked(f"output directory is locked by {self.path}") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


def _metrics_text(metrics_dict: dict) -> str:
    lines = []
    for key in sorted(metrics_dict):
        value = metrics_dict[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config, args.set or [])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _Lock(out):
        started = time.time()
        net = cfg.build_network()
        demand = cfg.build_demand(net)
        sim_cfg = cfg.build_sim_config()
        sim = Simulation(sim_cfg, net, demand)
        if args.dump_instances:
            sim.instance_dump = []
        events = sim.run()
        metrics = compute_metrics(events)

        trace_name = "trace.jsonl.gz" if args.gzip else "trace.jsonl"
        tmp_trace = out / (trace_name + ".tmp")
        write_trace(events, tmp_trace, compress=args.gzip)
        os.replace(tmp_trace, out / trace_name)
        _atomic_write_text(out / "metrics.json",
                           json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n")
        _atomic_write_text(out / "metrics.txt", _metrics_text(metrics.as_dict()))
        if args.dump_instances:
            dump = "\n".join(json.dumps(rec, sort_keys=True) for rec in sim.instance_dump)
            _atomic_write_text(out / "instances.jsonl", dump + "\n" if dump else "")

        inputs = {}
        for key in ("network.nodes", "network.edges"):
            inputs[cfg.values[key]] = sha256_file(cfg.values[key])
        source = cfg.values.get("demand.source", "")
        if source.startswith("file(") or source.startswith("hotzones("):
            arg0 = source[source.index("(") + 1:source.rindex(")")].split(",")[0].strip()
            inputs[arg0] = sha256_file(arg0)
        manifest = {
            "artifact": "poolsim",
            "version": __version__,
            "seed": cfg.values["sim.seed"],
            "config": cfg.snapshot(),
            "inputs_sha256": inputs,
            "outputs": sorted(p.name for p in out.iterdir()
                              if p.name not in (".lock",) and not p.name.endswith(".tmp")),
            "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
            "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "wall_time_s": round(time.time() - started, 3),
            "tallies": sim.tallies.__dict__,
        }
        _atomic_write_text(out / "manifest.json",
                           json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"simulate: {sim.tallies.completed}/{sim.tallies.created} requests completed; "
          f"outputs in {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    params = ScalingParams.default(args.capacity) if args.alpha is None else \
        ScalingParams(args.capacity, args.alpha, args.beta)
    us = [float(u) for u in args.u.split(",")]
    rows = []
    for u in us:
        r, c = predict_performance(u, params)
        rows.append({"u": u, "service_rate": r, "avg_commitments": c})
    if args.json:
        print(json.dumps({"capacity": args.capacity, "alpha": params.alpha,
                          "beta": params.beta, "rows": rows}, indent=2))
    else:
        print(f"capacity={args.capacity} alpha={params.alpha} beta={params.beta}")
        print(f"{'u':>8} {'service_rate':>14} {'avg_commitments':>16}")
        for row in rows:
            print(f"{row['u']:>8.3f} {row['service_rate']:>14.6f} "
                  f"{row['avg_commitments']:>16.6f}")
    return EXIT_OK


def cmd_fit(args) -> int:
    samples = []
    with open(args.samples, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "u" not in reader.fieldnames \
                or "service_rate" not in reader.fieldnames:
            raise DataError(f"{args.samples}: expected CSV header with u,service_rate")
        for row in reader:
            samples.append((float(row["u"]), float(row["service_rate"])))
    fit = fit_scaling(samples, args.capacity)
    result = {"capacity": args.capacity, "alpha": fit.params.alpha,
              "beta": fit.params.beta, "rmse": fit.rmse, "n_used": fit.n_used}
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(f"alpha={fit.params.alpha:.6f} beta={fit.params.beta:.6f} "
              f"rmse={fit.rmse:.6f} n_used={fit.n_used}")
    return EXIT_OK


def cmd_replay(args) -> int:
    events = read_trace(args.trace)
    metrics = compute_metrics(events)
    payload = json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), payload)
    if args.metrics:
        stored = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
        if stored != metrics.as_dict():
            diffs = [k for k in sorted(set(stored) | set(metrics.as_dict()))
                     if stored.get(k) != metrics.as_dict().get(k)]
            print(f"replay mismatch in: {', '.join(diffs)}", file=sys.stderr)
            return EXIT_TRACE
        print("replay: metrics match")
    elif not args.out:
        print(payload, end="")
    return EXIT_OK


def cmd_export_plot(args) -> int:
    events = read_trace(args.trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = export_plot_rows(events)
    _atomic_write_text(out / "epochs.csv", "\n".join(rows) + "\n")
    written = ["epochs.csv"]
    if args.config:
        cfg = parse_config(args.config, args.set or [])
        net = cfg.build_network()
        pos = export_position_rows(events, net, args.positions_every)
        _atomic_write_text(out / "positions.csv", "\n".join(pos) + "\n")
        written.append("positions.csv")
    print(f"export-plot: wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = parse_config(args.config, args.set or [])
    net = cfg.build_network()
    demand = cfg.build_demand(net)
    cfg.build_sim_config()
    print(f"validate: network {net.n_nodes} nodes / {net.n_edges} edges; "
          f"{len(demand)} requests; config OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolsim",
                                     description="Ride-pooling fleet simulator")
    parser.add_argument("--version", action="version", version=f"poolsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p, required=True):
        p.add_argument("--config", required=required, help="INI config file")
        p.add_argument("--set", action="append", metavar="SEC.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("simulate", help="run a simulation")
    add_config(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--gzip", action="store_true", help="compress the trace")
    p.add_argument("--dump-instances", action="store_true",
                   help="write per-epoch assignment instances for offline solver checks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="scaling-law operating points")
    p.add_argument("--u", default="0.5,1,1.5,2,2.5,3", help="comma-separated loads")
    p.add_argument("--capacity", type=int, default=4, choices=(2, 4, 6))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit", help="fit scaling parameters from samples CSV (u,service_rate)")
    p.add_argument("--samples", required=True)
    p.add_argument("--capacity", type=int, required=True, choices=(2, 4, 6))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", help="recompute metrics from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--metrics", help="stored metrics.json to compare against")
    p.add_argument("--out", help="write recomputed metrics JSON here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export-plot", help="per-epoch aggregates (and positions) as CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--positions-every", type=int, default=1,
                   help="sample vehicle positions every N epochs")
    add_config(p, required=False)
    p.set_defaults(func=cmd_export_plot)

    p = sub.add_parser("validate", help="check config and input files")
    add_config(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "alpha", None) is not None and getattr(args, "beta", None) is None:
        parser.error("--alpha requires --beta")
    try:
        return args.func(args)
    except OutputLocked as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalformedTrace as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except (DataError, PoolsimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
