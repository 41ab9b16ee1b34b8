"""Command-line front end.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from .detection import DetectionError, format_table
from .harness import engine
from .harness.formats import (
    FormatError,
    detect_format,
    format_event_trace,
    format_kdd_trace,
    load_rules,
    load_topology,
    load_trace,
)
from .harness.kdd import attribute_records, synth_kdd
from .harness.synth import synth_flood_trace
from .model import AgentAddress, TopologyError
from .registry import RegistryError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

_INVALID = (FormatError, TopologyError, DetectionError, RegistryError,
            engine.SimulationError, FileNotFoundError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _fault(text: str) -> tuple[float, str]:
    node, sep, when = text.rpartition("@")
    if not sep or not node:
        raise argparse.ArgumentTypeError(f"expected NODE@TIME, got {text!r}")
    try:
        t = float(when)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fault time in {text!r}") from None
    if t < 0:
        raise argparse.ArgumentTypeError("fault time must be non-negative")
    return t, node


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coopids", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (("run", "simulate the agent hierarchy"),
                        ("oracle", "flat-broadcast reference run")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--topology", required=True)
        s.add_argument("--trace", required=True)
        s.add_argument("--rules", required=True)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--fault", type=_fault, action="append", default=[],
                       metavar="NODE@TIME")
        s.add_argument("--out", required=True)

    s = sub.add_parser("compare", help="diff alert and delivery sets of two reports")
    s.add_argument("a")
    s.add_argument("b")

    s = sub.add_parser("gen-trace", help="write a synthetic trace")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("flood", "kdd"), default="flood")
    s.add_argument("--topology")
    s.add_argument("--target", help="domain/host/agent under attack")
    s.add_argument("--rate", type=float, default=12.0)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--background", type=float, default=0.0)
    s.add_argument("--records", type=int, default=1000)

    s = sub.add_parser("validate", help="check a topology file")
    s.add_argument("--topology", required=True)

    s = sub.add_parser("score", help="print per-class detection metrics of a report")
    s.add_argument("--report", required=True)
    return p


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_inputs(args):
    topology = load_topology(args.topology)
    rules = load_rules(args.rules)
    fmt = detect_format(args.trace)
    trace = load_trace(args.trace, fmt, topology)
    if fmt == "kdd":
        producers = [a.address for a in topology.agents if "kdd.connection" in a.produces]
        trace = attribute_records(trace, producers)
    return topology, trace, rules


def _simulate(args, oracle: bool) -> int:
    topology, trace, rules = load_inputs(args)
    cfg = engine.SimConfig(seed=args.seed, faults=tuple(args.fault))
    report = (engine.run_oracle if oracle else engine.run)(topology, trace, rules, cfg)
    write_atomic(args.out, report.to_json())
    print(f"{report.mode}: {len(trace)} events, {len(report.deliveries)} deliveries, "
          f"{len(report.alerts)} alerts -> {args.out}")
    return EXIT_OK


def _compare(args) -> int:
    a = json.loads(Path(args.a).read_text())
    b = json.loads(Path(args.b).read_text())
    diff = engine.compare_reports(a, b)
    same = True
    for what, (only_a, only_b) in diff.items():
        for item in sorted(only_a, key=repr):
            print(f"< {what} {item}")
            same = False
        for item in sorted(only_b, key=repr):
            print(f"> {what} {item}")
            same = False
    if same:
        print("reports agree")
    return EXIT_OK if same else EXIT_INVALID


def _gen_trace(args) -> int:
    if args.format == "kdd":
        records = synth_kdd(args.records, args.seed)
        write_atomic(args.out, format_kdd_trace(records))
    else:
        if not args.topology or not args.target:
            raise _UsageError("gen-trace --format flood needs --topology and --target")
        topology = load_topology(args.topology)
        target = AgentAddress.parse(args.target)
        topology.agent(target)
        records = synth_flood_trace(topology, target, args.rate, args.duration,
                                    args.background, args.seed)
        write_atomic(args.out, format_event_trace(records))
    print(f"wrote {len(records)} events to {args.out}")
    return EXIT_OK


def _score(args) -> int:
    report = json.loads(Path(args.report).read_text())
    classes = report.get("metrics", {}).get("classes")
    if classes is None:
        print("report carries no labelled records", file=sys.stderr)
        return EXIT_INVALID
    print(format_table(classes))
    return EXIT_OK


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.command in ("run", "oracle"):
            return _simulate(args, args.command == "oracle")
        if args.command == "compare":
            return _compare(args)
        if args.command == "gen-trace":
            return _gen_trace(args)
        if args.command == "validate":
            t = load_topology(args.topology)
            print(f"ok: {len(t.domains)} domains, {len(t.hosts)} hosts, {len(t.agents)} agents")
            return EXIT_OK
        return _score(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except KeyError as exc:
        print(f"error: unknown {exc.args[0]}", file=sys.stderr)
        return EXIT_INVALID
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
