"""Command-line driver: validate, run, enumerate, configure, inspect."""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path
from typing import Optional

from . import pnp, wire
from .bus import KIND_DELIVERED
from .config import Cluster, build_cluster, load_spec, parse_duration, validate_spec
from .errors import (
    ConfigError,
    DatasheetError,
    PartialConfigError,
    RangeError,
    ScheduleError,
    TtstnError,
    UnknownSeriesError,
    ValidationError,
)
from .ifs import IfsAddress, decode_address
from .nodes import MS_STATUS_OK
from .robot import data_config_path, load_robot_spec, overlap_variant, run_demo

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PROPERTY = 2
EXIT_IO = 3

_VALIDATION_ERRORS = (ConfigError, ValidationError, DatasheetError,
                      UnknownSeriesError, RangeError, ScheduleError)


def _parse_record_address(text: str):
    """'alias:file:record' or a packed hex/decimal address."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"address {text!r} must be alias:file:record")
        alias, file, record = (int(p, 0) for p in parts)
        return alias, file, record
    packed = int(text, 0)
    addr = decode_address(packed)
    return addr.alias, addr.file, addr.record


def _packed(alias: int, file: int, record: int) -> int:
    return IfsAddress(0, alias, file, record).encode()


def _build(path: str) -> Cluster:
    return build_cluster(load_spec(path))


def cmd_validate(args) -> int:
    spec = load_spec(args.config)
    report = validate_spec(spec)
    for finding in report.findings:
        print(finding)
    if report.ok:
        print(f"{args.config}: ok "
              f"({len(spec.nodes)} nodes, {len(spec.rodl_entries)} data rounds)")
        return EXIT_OK
    return EXIT_VALIDATION


def _print_summary(cluster: Cluster, cycles: Optional[int]) -> None:
    sim = cluster.sim
    delivered = [r for r in sim.trace if r.kind == KIND_DELIVERED]
    per_round = Counter(r.round_id for r in delivered)
    print(f"simulated time: {sim.now} ns")
    if cycles is not None:
        print(f"cycles: {cycles}")
    print(f"trace rows: {len(sim.trace)} ({len(delivered)} delivered bytes)")
    print(f"collisions: {sim.collisions}")
    print(f"slot violations: {len(sim.violations)}")
    for rid in sorted(per_round):
        slots = (cluster.rodls[rid].round_length_slots if rid in cluster.rodls
                 else 6)
        per_cycle = per_round[rid] / max(cycles or 1, 1)
        print(f"round {rid}: {per_round[rid]} bytes "
              f"({per_cycle:g}/cycle over {slots} slots)")
    if sim.diagnostics:
        print(f"diagnostics: {len(sim.diagnostics)}")


def cmd_run(args) -> int:
    cluster = _build(args.config)
    cycles = None
    if args.duration is not None:
        cluster.sim.advance(parse_duration(args.duration))
    else:
        cycles = args.cycles if args.cycles is not None else 10
        cluster.run_cycles(cycles)
    if args.trace:
        cluster.sim.export_trace(args.trace)
    if args.plot:
        from .plot import plot_trace
        plot_trace(cluster.sim.trace, cluster.sim.baud, args.plot)
    if args.summary:
        _print_summary(cluster, cycles)
    elif not args.trace:
        cluster.sim.export_trace(sys.stdout)
    return EXIT_OK


def cmd_baptize(args) -> int:
    spec = load_spec(args.config)
    cluster = build_cluster(spec)
    result = pnp.baptize(cluster.master, cluster.sim)
    for ident in result.identifications:
        if ident.aborted:
            print(f"aborted: name {ident.name} after {ident.bit_probes} bit-probes "
                  f"({ident.note})")
        else:
            print(f"baptized: name {ident.name} -> alias {ident.alias} "
                  f"({ident.bit_probes} bit-probes)")
    print(f"presence probes: {result.presence_probes}, "
          f"assigned: {len(result.assignments)}")
    if args.configure:
        if spec.registry is None:
            raise ValidationError(f"{spec.path}: no registry configured")
        for name, alias in result.assignments:
            sheet = pnp.fetch_datasheet(spec.registry, name.series)
            pnp.apply_configuration(cluster.master, cluster.sim, sheet, alias)
            print(f"configured: alias {alias} from datasheet "
                  f"{pnp.registry_filename(name.series)}")
        cluster.run_cycles(2)
    return EXIT_OK


def _dm_transaction(args, action: wire.MsAction, payload: Optional[bytes]) -> int:
    cluster = _build(args.config)
    alias, file, record = _parse_record_address(args.address)
    completion = cluster.master.enqueue_ms(action, alias, file, record, data=payload)
    pnp.drive(cluster.sim, completion)
    packed = _packed(alias, file, record)
    value = completion.value.hex() if completion.value is not None else "--"
    print(f"address=0x{packed:08X}, value={value}, "
          f"latency_cycles={completion.latency_cycles}")
    if completion.status != MS_STATUS_OK:
        print(f"status: {completion.status}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_dm_read(args) -> int:
    return _dm_transaction(args, wire.MsAction.READ, None)


def cmd_dm_write(args) -> int:
    payload = bytes.fromhex(args.value)
    if len(payload) != 4:
        raise ValidationError("write value must be 8 hex digits (4 bytes)")
    return _dm_transaction(args, wire.MsAction.WRITE, payload)


def cmd_cp_download(args) -> int:
    spec = load_spec(args.config)
    cluster = build_cluster(spec)
    series = args.series
    if series is None:
        for node in spec.nodes:
            if node.alias == args.alias:
                series = node.series
                break
        else:
            raise ValidationError(f"no node with alias {args.alias} in {spec.path}")
    else:
        series = int(series, 0)
    if spec.registry is None:
        raise ValidationError(f"{spec.path}: no registry configured")
    sheet = pnp.fetch_datasheet(spec.registry, series)
    pnp.apply_configuration(cluster.master, cluster.sim, sheet, args.alias)
    print(f"alias {args.alias}: configuration from "
          f"{pnp.registry_filename(series)} committed")
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.scenario != "robot":
        raise ValidationError(f"unknown demo {args.scenario!r} (have: robot)")
    spec = load_robot_spec()
    if args.overlap:
        spec = overlap_variant(spec)
    report = run_demo(cycles=args.cycles, spec=spec)
    print(f"cycles: {report.cycles}")
    print(f"collisions: {report.collisions}, slot violations: {report.violations}")
    print(f"ultrasonic windows checked: {report.us_windows_checked} cycles")
    print(f"infrared/servo pairs checked: {report.ir_pairs_checked}")
    print(f"speed-loop delay: {report.speed_delay_ns} ns (constant)"
          if report.speed_delay_ns >= 0 else "speed-loop delay: no data")
    if report.ok:
        print("all coordination properties hold")
        return EXIT_OK
    for failure in report.failures:
        print(f"FAIL: {failure}", file=sys.stderr)
    return EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttstn",
        description="Time-triggered smart-transducer cluster simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a cluster config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="simulate a cluster and export the trace")
    p.add_argument("config")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--cycles", type=int, default=None,
                       help="number of whole cluster cycles (default 10)")
    group.add_argument("--duration", default=None,
                       help="simulated time to run, e.g. 250ms")
    p.add_argument("--trace", default=None, help="trace file path (default stdout)")
    p.add_argument("--summary", action="store_true",
                   help="print run statistics instead of the trace")
    p.add_argument("--plot", default=None,
                   help="write a slot-occupancy timeline SVG")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("baptize", help="enumerate unnamed nodes and assign aliases")
    p.add_argument("config")
    p.add_argument("--configure", action="store_true",
                   help="also download each node's datasheet configuration")
    p.set_defaults(fn=cmd_baptize)

    p = sub.add_parser("dm-read", help="read one record over the maintenance channel")
    p.add_argument("config")
    p.add_argument("address", help="alias:file:record or packed 0x address")
    p.set_defaults(fn=cmd_dm_read)

    p = sub.add_parser("dm-write", help="write one record over the maintenance channel")
    p.add_argument("config")
    p.add_argument("address", help="alias:file:record or packed 0x address")
    p.add_argument("value", help="8 hex digits")
    p.set_defaults(fn=cmd_dm_write)

    p = sub.add_parser("cp-download", help="apply a datasheet configuration")
    p.add_argument("config")
    p.add_argument("--alias", type=int, required=True)
    p.add_argument("--series", default=None,
                   help="override the series looked up from the config")
    p.set_defaults(fn=cmd_cp_download)

    p = sub.add_parser("demo", help="run a shipped scenario and check its properties")
    p.add_argument("scenario", nargs="?", default="robot")
    p.add_argument("--cycles", type=int, default=1000)
    p.add_argument("--overlap", action="store_true",
                   help="deliberately break the sounder phase offset")
    p.set_defaults(fn=cmd_demo)

    return parser


def entry(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PartialConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (*_VALIDATION_ERRORS, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TtstnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


def main() -> None:
    sys.exit(entry())


if __name__ == "__main__":
    main()
