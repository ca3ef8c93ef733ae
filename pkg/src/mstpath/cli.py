"""Command-line entry point.

Exit status: 0 success, 1 parse/validation failure, 2 constraint violation
(packet dropped, forwarding loop, jitter bound exceeded).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .controller import parse_scenario, run_scenario
from .errors import HopLimitExceeded, MstPathError
from .mst import compute_mst, orient_tree, total_weight
from .pipeline import SwitchRuntime, run_packet, trace_to_json, validate_runtime
from .request import (
    DEFAULT_RATE_TOLERANCE,
    CollectionReport,
    parse_latencies,
    parse_readings,
    parse_request,
    plan_request,
    simulate_collection,
    verify_rate,
)
from .ruleplan import parse_runtime, runtime_filename, serialize_runtime, synthesize_rules
from .topology import format_weight, load_topology, normalize_ipv4

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VIOLATION = 2

log = logging.getLogger("mstpath")


def _setup_logging():
    level = os.environ.get("MSTPATH_LOG", "error").lower()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel({"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.ERROR))
    log.propagate = False


class _Out:
    """Human text goes to stdout unless --stdout claims it for JSON."""

    def __init__(self, machine: bool):
        self.machine = machine

    def text(self, s: str):
        print(s, file=sys.stderr if self.machine else sys.stdout)

    def data(self, s: str):
        if self.machine:
            sys.stdout.write(s)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MstPathError(f"cannot read {path}: {exc.strerror}") from None


def cmd_compile(args, out: _Out) -> int:
    t = load_topology(args.topology)
    mst = compute_mst(t, args.root)
    tree = orient_tree(t, mst, args.root)
    plan = synthesize_rules(t, tree)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = {}
    for sw in plan.switches():
        text = serialize_runtime(plan, sw)
        (out_dir / runtime_filename(sw)).write_text(text, encoding="utf-8")
        docs[sw] = json.loads(text)
    out.text(f"root {tree.root}")
    for link in mst:
        out.text(f"mst edge {link}")
    out.text(f"total weight {format_weight(total_weight(mst))}")
    out.text(f"wrote {len(docs)} runtime files to {out_dir}")
    out.data(json.dumps(docs, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args, out: _Out) -> int:
    t = load_topology(args.topology)
    rules_dir = Path(args.rules)
    runtimes = {}
    for sw in t.switches():
        path = rules_dir / runtime_filename(sw)
        if not path.is_file():
            raise MstPathError(f"missing runtime file {path}")
        rt = SwitchRuntime(sw, tuple(parse_runtime(_read(str(path)))))
        validate_runtime(t, rt)
        runtimes[sw] = rt
    dst = t.node(args.to).ipv4 if args.to in t.nodes else normalize_ipv4(args.to)
    try:
        trace = run_packet(t, runtimes, getattr(args, "from"), dst, args.ttl)
    except HopLimitExceeded as exc:
        trace = exc.trace
    out.text(trace.render())
    out.text(f"{trace.outcome}: {' -> '.join(trace.switch_path)}")
    out.data(trace_to_json(trace))
    return EXIT_OK if trace.delivered else EXIT_VIOLATION


def cmd_controller(args, out: _Out) -> int:
    t = load_topology(args.topology)
    events = parse_scenario(_read(args.scenario))
    report = run_scenario(t, events)
    doc = report.to_json()
    Path(args.report).write_text(doc, encoding="utf-8")
    out.text(report.render())
    out.data(doc)
    return EXIT_OK if report.all_delivered else EXIT_VIOLATION


def cmd_request(args, out: _Out) -> int:
    t = load_topology(args.topology)
    req = parse_request(_read(args.request))
    readings = parse_readings(_read(args.readings))
    latencies = parse_latencies(_read(args.latency), t) if args.latency else {}
    plan = plan_request(t, req)
    report = CollectionReport(plan, simulate_collection(plan, readings, latencies), verify_rate(plan, readings, args.rate_tolerance))
    doc = report.to_json()
    Path(args.report).write_text(doc, encoding="utf-8")
    out.text(report.render())
    out.data(doc)
    return EXIT_OK if report.jitter_ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mstpath", description="MST-based IoT datapath programming toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--topology", required=True, help="topology JSON file or bundled fixture name")
        sp.add_argument("--stdout", action="store_true", help="write machine-readable output to stdout")

    c = sub.add_parser("compile", help="write <switch>-runtime.json files for a root")
    common(c)
    c.add_argument("--root", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", help="trace one packet through installed rules")
    common(s)
    s.add_argument("--rules", required=True, help="directory of runtime files")
    s.add_argument("--from", required=True, help="origin host")
    s.add_argument("--to", required=True, help="destination IPv4 (or host name)")
    s.add_argument("--ttl", type=int, default=64)
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("controller", help="run a controller scenario")
    common(k)
    k.add_argument("--scenario", required=True)
    k.add_argument("--report", required=True)
    k.set_defaults(func=cmd_controller)

    r = sub.add_parser("request", help="plan a collection request and simulate it")
    common(r)
    r.add_argument("--request", required=True)
    r.add_argument("--readings", required=True)
    r.add_argument("--latency")
    r.add_argument("--report", required=True)
    r.add_argument("--rate-tolerance", type=float, default=DEFAULT_RATE_TOLERANCE)
    r.set_defaults(func=cmd_request)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    out = _Out(args.stdout)
    try:
        return args.func(args, out)
    except (MstPathError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
