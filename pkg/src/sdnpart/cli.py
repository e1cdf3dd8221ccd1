"""Command-line interface: ``sdnpart <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness import ExperimentConfig, ExperimentError, assign_ospf_capacities, generate_demands, run_experiment
from .lsa import advertisement_spaces
from .optimize import (
    MODES,
    SDNPART_MODE,
    OptimizationError,
    balance_load,
    dimension_capacity,
    recover,
    routing_tables,
)
from .partition import PartitionError, partition
from .topology import TopologyError, load_topology


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like 2 or 2,3, got {text!r}") from None
    if any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("K must be >= 1")
    return ks


def _link(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected NODE,NODE, got {text!r}")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdnpart", description="Partition OSPF domains with SDN border routers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, k_default="2"):
        p.add_argument("--topology", default="abilene", help="topology file or bundled name (default abilene)")
        p.add_argument("--k", type=_ks, default=_ks(k_default), help="number of sub-domains, comma separated")
        p.add_argument("--max", type=int, default=4, help="maximum number of border nodes (default 4)")
        p.add_argument("--out", help="directory for output files (default: print to stdout)")

    def demand_opts(p):
        p.add_argument("--seed", type=int, default=0, help="demand RNG seed")
        p.add_argument("--umax", type=float, default=0.8, help="maximum link utilization (default 0.8)")

    common(sub.add_parser("partition", help="compute border nodes and sub-domains"))
    p = sub.add_parser("enumerate-lsa", help="list advertisement scenarios per sub-domain")
    common(p)
    p.add_argument("--parallel", type=_bool, default=False)
    for name, text in (("dimension", "cheapest link capacities"), ("balance", "load balancing on OSPF capacities")):
        p = sub.add_parser(name, help=text)
        common(p)
        demand_opts(p)
        p.add_argument("--mode", choices=MODES, default=SDNPART_MODE)
    p = sub.add_parser("recover", help="reroute after one link failure")
    common(p)
    demand_opts(p)
    p.add_argument("--failed", type=_link, required=True, help="failed link as NODE,NODE")
    p.add_argument("--punishment", type=float, default=1.0, help="cost per changed advertised metric")
    p = sub.add_parser("experiment", help="run all schemes and write the report files")
    common(p)
    demand_opts(p)
    p.add_argument("--parallel", type=_bool, default=False)
    p.add_argument("--failures", type=_bool, default=True, help="run the single-link failure sweep")
    p.add_argument("--node-limit", type=int, default=5000, help="branch-and-bound node limit per model")
    return parser


def _emit(args, name: str, text: str) -> None:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _partition(args, topo):
    if len(args.k) != 1:
        raise SystemExit(f"{args.command} takes a single K")
    return partition(topo, args.k[0], args.max)


def cmd_partition(args, topo):
    _emit(args, "partition.json", _partition(args, topo).to_json())


def cmd_enumerate(args, topo):
    p = _partition(args, topo)
    spaces = advertisement_spaces(topo, p, args.parallel)
    _emit(args, "advertisements.json", json.dumps([spaces[k].to_dict() for k in sorted(spaces)], indent=2))


def _tables(args, topo, flows):
    p = _partition(args, topo) if args.mode == SDNPART_MODE else None
    return routing_tables(args.mode, topo, flows, p)


def cmd_dimension(args, topo):
    flows = generate_demands(topo, args.seed)
    plan, routing = dimension_capacity(topo, _tables(args, topo, flows), u_max=args.umax, mode=args.mode)
    _emit(args, f"capacity_{args.mode}.json", plan.to_json())
    _emit(args, f"routing_{args.mode}.json", json.dumps(routing.to_dict(), indent=2))


def cmd_balance(args, topo):
    flows = generate_demands(topo, args.seed)
    caps = assign_ospf_capacities(topo, flows, args.umax).capacities
    sol = balance_load(topo, _tables(args, topo, flows), caps, mode=args.mode)
    _emit(args, f"routing_{args.mode}.json", json.dumps(sol.to_dict(), indent=2))


def cmd_recover(args, topo):
    flows = generate_demands(topo, args.seed)
    caps = assign_ospf_capacities(topo, flows, args.umax).capacities
    p = _partition(args, topo)
    previous = balance_load(topo, routing_tables(SDNPART_MODE, topo, flows, p), caps)
    res = recover(topo, p, flows, caps, args.failed, previous, args.punishment)
    data = res.solution.to_dict()
    data["metric_changes"] = res.changes
    data["changed"] = [list(c) for c in res.changed]
    _emit(args, "recovery.json", json.dumps(data, indent=2))


def cmd_experiment(args, topo):
    cfg = ExperimentConfig(
        topology=args.topology,
        ks=args.k,
        max_borders=args.max,
        seed=args.seed,
        u_max=args.umax,
        node_limit=args.node_limit,
        failures=args.failures,
        parallel=args.parallel,
    )
    out = args.out or "results"
    report = run_experiment(cfg, out)
    for s in report.schemes:
        line = f"{s}: capacity ratio {report.capacity_ratio(s):.3f}"
        if s in report.failures:
            f = report.failures[s]
            line += f", loss {1000 * f.loss_ratio:.2f} permille, reconfigurations {f.reconfigurations:.1f}"
        print(line)
    print(f"wrote {out}")


COMMANDS = {
    "partition": cmd_partition,
    "enumerate-lsa": cmd_enumerate,
    "dimension": cmd_dimension,
    "balance": cmd_balance,
    "recover": cmd_recover,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        topo = load_topology(args.topology)
        COMMANDS[args.command](args, topo)
    except (TopologyError, PartitionError, OptimizationError, ExperimentError, OSError, KeyError) as exc:
        print(f"sdnpart: error: {exc}", file=sys.stderr)
        return 1
    return 0
