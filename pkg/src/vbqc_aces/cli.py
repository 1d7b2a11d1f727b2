"""Simulate blind delegated computation and estimate gate noise from trap statistics.

Exit codes: 0 success (or Accept), 2 Abort, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from vbqc_aces.estimator import read_stats_csv, statistics_to_biases, write_stats_csv
from vbqc_aces.experiment import (
    RunOutput,
    SpecError,
    estimate_from_biases,
    load_spec,
    model_support,
    parse_noise_spec,
    run_experiment,
    summary_lines,
    truth_for,
    write_run,
)
from vbqc_aces.graphs import graph_from_dict, greedy_color, largest_first_order, load_graph
from vbqc_aces.noise import MODES, PER_QUBIT, load_noise
from vbqc_aces.planner import build_plan, load_plan, validate_plan

EXIT_OK, EXIT_ERROR, EXIT_ABORT = 0, 1, 2


def _print_plan_summary(plan, graph, support=None) -> None:
    s = plan.summary(graph, support)
    print(f"orderings: {s['orderings']}")
    print(f"parameters covered: {s['covered']}/{s['parameters']}")
    print(f"triples: {s['triples']}, conflict max degree {s['conflict_max_degree']}, colors {s['colors']}")
    print("quoted ordering bounds (not asserted): " + ", ".join(str(b) for b in s["quoted_bounds"]))
    missing = plan.missing(graph, support)
    if missing:
        print(f"uncovered parameters: {missing}")


def cmd_plan(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    support = None
    if args.noise:
        support = model_support(args.mode, load_noise(args.noise, graph))
    plan = build_plan(graph, args.mode, support)
    rejected = validate_plan(graph, plan, support)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan.save(out / "plan.json")
    _print_plan_summary(plan, graph, support)
    print(f"structurally rejected equations: {len(rejected)}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.shots:
        if any(s < 1 for s in args.shots):
            raise SpecError("shots must be positive")
        spec.shots = list(args.shots)
    if args.mode:
        spec.mode = args.mode
    if args.exact_bias:
        spec.exact_bias = True
    run_experiment(spec, args.out_dir)
    return EXIT_OK


def _load_protocol_spec(path: Path) -> dict[str, Any]:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc


def cmd_protocol(args: argparse.Namespace) -> int:
    from vbqc_aces.protocol.channel import parse_address
    from vbqc_aces.protocol.mbqc import pattern_from_dict, trivial_pattern
    from vbqc_aces.protocol.session import (
        ACCEPT,
        ProtocolConfig,
        ZAttack,
        run_client,
        run_rvbqc,
        run_server,
    )

    path = Path(args.spec)
    data = _load_protocol_spec(path)
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    try:
        cfg = ProtocolConfig(int(data["N"]), int(data["d"]), int(data["w"]), seed)
        graph = graph_from_dict(data["graph"])
    except KeyError as exc:
        raise SpecError(f"protocol spec is missing {exc}") from exc
    pattern = pattern_from_dict(data["pattern"], graph) if data.get("pattern") else trivial_pattern(graph)
    model = parse_noise_spec(data.get("noise")).variants(graph, seed, path.parent)[0][1]
    mode = args.mode or data.get("mode", PER_QUBIT)
    plan_ref = data.get("plan")
    plan = load_plan(path.parent / plan_ref) if isinstance(plan_ref, str) else build_plan(graph, mode, model_support(mode, model))
    adversary = ZAttack(int(data["adversary"]["z_attack"])) if data.get("adversary") else None
    coloring = greedy_color(graph, largest_first_order(graph))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.role == "client":
        res = run_client(cfg, pattern, coloring, parse_address(args.connect))
        _write_json(out / "client_records.json", [r.to_dict() for r in res.records])
        _print_verdict(res.verdict, res.failed_tests, res.result)
        return EXIT_OK if res.verdict == ACCEPT else EXIT_ABORT

    if args.role == "server":
        srv = run_server(graph, plan, model, parse_address(args.listen), seed, adversary)
        _write_json(out / "server_records.json", [r.to_dict() for r in srv.transcript.records])
        print(f"verdict: {srv.transcript.verdict}")
        _server_estimate(graph, plan, model, mode, srv.stats, out, seed)
        return EXIT_OK if srv.transcript.verdict == ACCEPT else EXIT_ABORT

    result = run_rvbqc(cfg, pattern, coloring, plan, model, args.transport, adversary)
    _write_json(out / "records.json", result.to_dict())
    _print_verdict(result.verdict, result.failed_tests, result.result)
    _server_estimate(graph, plan, model, mode, result.stats, out, seed)
    return EXIT_OK if result.accepted else EXIT_ABORT


def _print_verdict(verdict: str, failed: int, result: int | None) -> None:
    print(f"verdict: {verdict}")
    print(f"failed test rounds: {failed}")
    print(f"majority result: {'-' if result is None else result}")


def _server_estimate(graph, plan, model, mode, stats, out: Path, seed: int) -> None:
    write_stats_csv(out / "trap_stats.csv", stats)
    if not stats:
        return
    truth = truth_for(graph, plan, model) if model is not None else None
    rows = "stats"
    report, dm, res = estimate_from_biases(
        graph, plan, statistics_to_biases(stats), truth, rows, model_support(mode, model),
        stats, 200, seed, sum(s.shots for s in stats),
    )
    run = RunOutput("protocol", None, None, report, res.rank, len(dm.columns), dm.unidentifiable, res.null_affected)
    write_run(out, "", run, None, 30)
    print(f"estimated parameters: {len(dm.columns)} (rank {res.rank}, {len(res.null_affected)} not identifiable from these rounds)")


def cmd_estimate(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    stats = read_stats_csv(args.stats)
    model = load_noise(args.noise, graph) if args.noise else None
    mode = args.mode or PER_QUBIT
    support = model_support(mode, model)
    plan = load_plan(args.plan) if args.plan else build_plan(graph, mode, support)
    truth = truth_for(graph, plan, model) if model is not None else None
    rows = args.rows or "stats"
    seed = args.seed if args.seed is not None else 0
    report, dm, res = estimate_from_biases(
        graph, plan, statistics_to_biases(stats), truth, rows, support, stats,
        args.bootstrap, seed, sum(s.shots for s in stats),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = RunOutput("", None, None, report, res.rank, len(dm.columns), dm.unidentifiable, res.null_affected)
    write_run(out, "", run, None, args.bins)
    print(f"parameters={len(dm.columns)} rank={res.rank}")
    for line in summary_lines(run):
        print(line)
    return EXIT_OK


def _write_json(path: Path, data: Any) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vbqc-aces", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="build the ordering plan for a graph")
    p.add_argument("graph", help="graph JSON file")
    p.add_argument("--mode", choices=MODES, default=PER_QUBIT)
    p.add_argument("--noise", help="noise JSON with cross-talk supports")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("experiment", help="run a calibration or protocol experiment")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int, action="append", help="shot budget per bin (repeatable)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--exact-bias", action="store_true", help="use exact biases instead of sampling")
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("protocol", help="run the delegated protocol")
    p.add_argument("spec", help="protocol spec JSON")
    p.add_argument("--transport", choices=("inprocess", "tcp"), default="inprocess")
    p.add_argument("--role", choices=("both", "client", "server"), default="both")
    p.add_argument("--listen", default="127.0.0.1:7800", help="server address (role server)")
    p.add_argument("--connect", default="127.0.0.1:7800", help="server address (role client)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("estimate", help="estimate eigenvalues from a trap-statistics CSV")
    p.add_argument("stats", help="trap statistics CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--plan")
    p.add_argument("--noise", help="ground-truth noise JSON for error reporting")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--rows", choices=("stats", "equations"))
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    from vbqc_aces.protocol.channel import ChannelError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ValueError, KeyError, OSError, ChannelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
