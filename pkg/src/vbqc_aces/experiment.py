"""Experiment specs and runners behind the command line.

Calibration runs allocate a fixed shot budget to every (ordering, trap) bin:
each plan ordering is run once per color class, with that class as traps.
Protocol runs execute the full delegated protocol and bin the released test
rounds afterwards, so per-bin shot counts are whatever the random schedule
produced.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from vbqc_aces.circuit import GateOrdering, derive_seed_sequence, exact_trap_bias, simulate_test_round_mc
from vbqc_aces.estimator import (
    ROWS_EQUATIONS,
    ROWS_STATS,
    EstimateReport,
    TrapStatistic,
    bootstrap_stderr,
    design_matrix_from_biases,
    effective_truth,
    error_report,
    histogram,
    solve_log_least_squares,
    statistics_to_biases,
    write_estimates_csv,
    write_histogram_csv,
    write_stats_csv,
)
from vbqc_aces.graphs import Graph, graph_from_dict, greedy_color, largest_first_order
from vbqc_aces.noise import (
    MODES,
    PER_EDGE,
    PER_QUBIT,
    GaussianSpec,
    NoiseModel,
    lambda_from_p,
    load_noise,
    noise_from_dict,
    parameter_keys,
    sample_gaussian_model,
    uniform_edge_model,
    uniform_model,
)
from vbqc_aces.planner import OrderingPlan, build_plan, load_plan

CALIBRATION = "calibration"
PROTOCOL = "protocol"


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    params: Mapping[str, Any]

    def variants(self, graph: Graph, seed: int, base_dir: Path) -> list[tuple[str, NoiseModel, float | None]]:
        """``(tag, model, noise std)`` per noise setting; gaussian specs may list several stds."""
        p = self.params
        if self.kind == "uniform":
            if p.get("mode", PER_QUBIT) == PER_EDGE:
                return [("", uniform_edge_model(graph, lambda_from_p(float(p["p"]))), None)]
            return [("", uniform_model(graph, float(p["p"])), None)]
        if self.kind == "gaussian":
            stds = p["std"] if isinstance(p["std"], list) else [p["std"]]
            nseed = int(p.get("seed", seed))
            return [
                (f"std{s:g}", sample_gaussian_model(graph, GaussianSpec(float(p["mean"]), float(s)), nseed), float(s))
                for s in stds
            ]
        if self.kind == "file":
            return [("", load_noise(base_dir / p["path"], graph), None)]
        if self.kind == "model":
            return [("", noise_from_dict(p, graph), None)]
        if self.kind == "none":
            return [("", None, None)]
        raise SpecError(f"unknown noise kind {self.kind!r}")


def parse_noise_spec(data: Any) -> NoiseSpec:
    if data is None:
        return NoiseSpec("none", {})
    if not isinstance(data, Mapping):
        raise SpecError("noise spec must be an object")
    kinds = [k for k in ("uniform", "gaussian", "file", "model", "none") if k in data]
    if len(kinds) != 1:
        raise SpecError("noise spec needs exactly one of uniform, gaussian, file, model, none")
    kind = kinds[0]
    params = data[kind]
    if kind == "file" and isinstance(params, str):
        params = {"path": params}
    if kind == "none":
        params = {}
    if kind == "uniform" and "p" not in params:
        raise SpecError("uniform noise needs p")
    if kind == "gaussian" and not {"mean", "std"} <= set(params):
        raise SpecError("gaussian noise needs mean and std")
    return NoiseSpec(kind, params)


@dataclass
class ExperimentSpec:
    graph: Graph
    noise: NoiseSpec
    shots: list[int]
    mode: str = PER_QUBIT
    run: str = CALIBRATION
    seed: int = 0
    exact_bias: bool = False
    rows: str | None = None
    bootstrap: int = 200
    bins: int = 30
    probes: list[dict] = field(default_factory=list)
    protocol: dict[str, Any] = field(default_factory=dict)
    pattern: dict[str, Any] | None = None
    plan_path: str | None = None
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentSpec:
        if "graph" not in data:
            raise SpecError("spec needs a graph")
        shots = data.get("shots", [])
        shots = shots if isinstance(shots, list) else [shots]
        exact = bool(data.get("exact_bias", False))
        run = data.get("run", CALIBRATION)
        if run not in (CALIBRATION, PROTOCOL):
            raise SpecError(f"unknown run kind {run!r}")
        if run == CALIBRATION and not exact and not shots:
            raise SpecError("calibration without exact_bias needs shots")
        for s in shots:
            if not isinstance(s, int) or s < 1:
                raise SpecError(f"shots must be positive integers, got {s!r}")
        mode = data.get("mode", PER_QUBIT)
        if mode not in MODES:
            raise SpecError(f"unknown mode {mode!r}")
        rows = data.get("rows")
        if rows not in (None, ROWS_STATS, ROWS_EQUATIONS):
            raise SpecError(f"unknown rows {rows!r}")
        if run == PROTOCOL and not {"N", "d", "w"} <= set(data.get("protocol", {})):
            raise SpecError("protocol runs need protocol.N, protocol.d and protocol.w")
        try:
            graph = graph_from_dict(data["graph"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"invalid graph: {exc}") from exc
        return cls(
            graph=graph,
            noise=parse_noise_spec(data.get("noise")),
            shots=shots,
            mode=mode,
            run=run,
            seed=int(data.get("seed", 0)),
            exact_bias=exact,
            rows=rows,
            bootstrap=int(data.get("bootstrap", 200)),
            bins=int(data.get("bins", 30)),
            probes=list(data.get("probes", [])),
            protocol=dict(data.get("protocol", {})),
            pattern=data.get("pattern"),
            plan_path=data.get("plan"),
            base_dir=Path(base_dir),
        )

    @property
    def row_layout(self) -> str:
        return self.rows or ROWS_STATS


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    return ExperimentSpec.from_dict(data, path.parent)


# --- building blocks ------------------------------------------------------------


def calibration_statistics(
    graph: Graph, plan: OrderingPlan, model: NoiseModel, shots: int, seed: int
) -> list[TrapStatistic]:
    """``shots`` rounds per (ordering, color class); every vertex is a trap in one class."""
    coloring = greedy_color(graph, largest_first_order(graph))
    stats = []
    for o in plan.orderings:
        for ci, cls in enumerate(coloring.classes()):
            res = simulate_test_round_mc(graph, o, model, cls, shots, seed, stream=("calibration", ci, shots))
            stats.extend(TrapStatistic(o.ordering_id, v, shots, f) for v, f in sorted(res.failures().items()))
    return sorted(stats, key=lambda s: (s.ordering_id, s.trap))


def exact_plan_biases(graph: Graph, plan: OrderingPlan, model: NoiseModel) -> dict[tuple[str, int], float]:
    return {
        (o.ordering_id, v): exact_trap_bias(graph, o, model, v)
        for o in plan.orderings
        for v in graph.vertices
    }


def model_support(mode: str, model: NoiseModel | None):
    """Gate supports the design matrix must use; only per_qubit plans see cross-talk."""
    if mode != PER_QUBIT or model is None or model.mode != PER_QUBIT:
        return None
    return {e: nu for e, nu in model.support.items() if len(nu) > 2} or None


def truth_for(graph: Graph, plan: OrderingPlan, model: NoiseModel) -> dict:
    """Model eigenvalues when the model matches the plan's parametrisation, else effective ones."""
    if model.mode == plan.mode:
        return {k: model.lam(k) for k in parameter_keys(graph, plan.mode, model_support(plan.mode, model))}
    return effective_truth(graph, plan, model)


@dataclass
class RunOutput:
    tag: str
    shots: int | None
    noise_std: float | None
    report: EstimateReport
    rank: int
    columns: int
    unidentifiable: list
    null_affected: list


def estimate_from_biases(
    graph: Graph,
    plan: OrderingPlan,
    biases: Mapping[tuple[str, int], float],
    truth: Mapping | None,
    rows: str,
    support=None,
    stats: Sequence[TrapStatistic] | None = None,
    bootstrap: int = 0,
    seed: int = 0,
    shots_used: int = 0,
) -> tuple[EstimateReport, Any, Any]:
    dm = design_matrix_from_biases(plan, biases, graph, plan.mode, support, rows)
    res = solve_log_least_squares(dm)
    stderr = None
    if stats is not None and bootstrap > 1:
        seq = derive_seed_sequence(seed, "bootstrap", shots_used)
        stderr = bootstrap_stderr(dm, stats, bootstrap, int(seq.generate_state(1)[0]))
    matched_truth = None if truth is None else {k: truth[k] for k in res.lambdas}
    report = error_report(
        res.lambdas,
        matched_truth,
        dm.rows_per_column(),
        stderr,
        plan.mode,
        res.residual_norm,
        shots_used,
        dm.dropped_rows,
    )
    return report, dm, res


def write_run(out_dir: Path, tag: str, out: RunOutput, stats: Sequence[TrapStatistic] | None, bins: int) -> None:
    suffix = f"_{tag}" if tag else ""
    if stats is not None:
        write_stats_csv(out_dir / f"trap_stats{suffix}.csv", stats)
    write_estimates_csv(out_dir / f"estimates{suffix}.csv", out.report)
    diffs = out.report.diffs()
    if diffs.size:
        write_histogram_csv(out_dir / f"histogram{suffix}.csv", [(histogram(diffs, bins), out.shots or 0, out.noise_std)])
        write_histogram_csv(
            out_dir / f"abs_histogram{suffix}.csv",
            [(histogram(100.0 * abs(diffs), bins, symmetric=False), out.shots or 0, out.noise_std)],
        )


def summary_lines(out: RunOutput) -> list[str]:
    s = out.report.summary()
    if not s["count"]:
        return ["mean diff: n/a (no ground truth)", "std diff: n/a", f"rejected rows: {out.report.dropped_rows}"]
    return [
        f"mean diff: {s['mean_diff']:.6g}",
        f"std diff: {s['std_diff']:.6g}",
        f"rejected rows: {out.report.dropped_rows}",
    ]


# --- probes -----------------------------------------------------------------------


def run_probes(
    spec: ExperimentSpec, model: NoiseModel, log: Callable[[str], None]
) -> list[dict[str, Any]]:
    """Bias of one trap under named orderings given in external vertex labels."""
    results = []
    for probe in spec.probes:
        base = int(probe.get("base", 0))
        trap = int(probe["trap"]) - base
        values = []
        for item in probe["orderings"]:
            ordering = GateOrdering([(u - base, v - base) for u, v in item["edges"]], item["name"])
            if spec.exact_bias:
                bias = exact_trap_bias(spec.graph, ordering, model, trap)
            else:
                shots = spec.shots[0]
                res = simulate_test_round_mc(spec.graph, ordering, model, [trap], shots, spec.seed, ("probe", item["name"]))
                bias = 1.0 - 2.0 * res.failures()[trap] / shots
            values.append((item["name"], bias))
            log(f"P_{trap + base}({item['name']})={bias:.7f}")
        entry = {"trap": trap + base, "biases": dict(values)}
        if len(values) == 2 and values[1][1] > 0:
            ratio = values[0][1] / values[1][1]
            entry["ratio"] = ratio
            log(f"ratio P_{trap + base}({values[0][0]})/P_{trap + base}({values[1][0]})={ratio:.6f}")
        results.append(entry)
    return results


# --- runners ----------------------------------------------------------------------


def _plan_for(spec: ExperimentSpec, model: NoiseModel | None) -> OrderingPlan:
    if spec.plan_path:
        return load_plan(spec.base_dir / spec.plan_path)
    return build_plan(spec.graph, spec.mode, model_support(spec.mode, model))


def run_experiment(
    spec: ExperimentSpec, out_dir: str | Path, log: Callable[[str], None] = print
) -> dict[str, Any]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict[str, Any] = {"runs": []}
    for noise_tag, model, noise_std in spec.noise.variants(spec.graph, spec.seed, spec.base_dir):
        plan = _plan_for(spec, model)
        plan.save(out_dir / "plan.json")
        support = model_support(spec.mode, model)
        if spec.probes and model is not None:
            summary["probes"] = run_probes(spec, model, log)
        if spec.run == PROTOCOL:
            outputs = [_protocol_run(spec, plan, model, noise_tag, noise_std, out_dir, log)]
        else:
            if model is None:
                raise SpecError("calibration runs need a noise model")
            truth = truth_for(spec.graph, plan, model)
            outputs = []
            budgets = [None] if spec.exact_bias else spec.shots
            for shots in budgets:
                tag = "_".join(t for t in (noise_tag, "exact" if shots is None else f"shots{shots}") if t)
                if shots is None:
                    stats = None
                    biases = exact_plan_biases(spec.graph, plan, model)
                else:
                    if model.mode != PER_QUBIT:
                        raise SpecError("sampling needs a per_qubit noise model")
                    stats = calibration_statistics(spec.graph, plan, model, shots, spec.seed)
                    biases = statistics_to_biases(stats)
                report, dm, res = estimate_from_biases(
                    spec.graph, plan, biases, truth, spec.row_layout, support, stats,
                    spec.bootstrap if stats is not None else 0, spec.seed, shots or 0,
                )
                out = RunOutput(tag, shots, noise_std, report, res.rank, len(dm.columns),
                                dm.unidentifiable, res.null_affected)
                write_run(out_dir, tag, out, stats, spec.bins)
                outputs.append(out)
        for out in outputs:
            log(f"[{out.tag or 'run'}] parameters={out.columns} rank={out.rank}")
            for line in summary_lines(out):
                log(line)
            summary["runs"].append({"tag": out.tag, "shots": out.shots, "noise_std": out.noise_std,
                                    "rank": out.rank, "columns": out.columns,
                                    "unidentifiable": len(out.unidentifiable),
                                    "null_affected": len(out.null_affected),
                                    **out.report.summary(), "rejected_rows": out.report.dropped_rows})
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary


def _protocol_run(spec, plan, model, noise_tag, noise_std, out_dir: Path, log) -> RunOutput:
    from vbqc_aces.protocol.mbqc import pattern_from_dict, trivial_pattern
    from vbqc_aces.protocol.session import ProtocolConfig, run_rvbqc

    cfg = ProtocolConfig(int(spec.protocol["N"]), int(spec.protocol["d"]), int(spec.protocol["w"]), spec.seed)
    pattern = pattern_from_dict(spec.pattern, spec.graph) if spec.pattern else trivial_pattern(spec.graph)
    coloring = greedy_color(spec.graph, largest_first_order(spec.graph))
    result = run_rvbqc(cfg, pattern, coloring, plan, model, spec.protocol.get("transport", "inprocess"))
    log(f"verdict: {result.verdict} failed tests: {result.failed_tests} result: {result.result}")
    with open(out_dir / f"records{'_' + noise_tag if noise_tag else ''}.json", "w") as fh:
        json.dump(result.to_dict(), fh, sort_keys=True)
    stats = result.stats
    shots = [s.shots for s in stats]
    log(f"bins: {len(stats)} effective shots per bin: min {min(shots, default=0)} max {max(shots, default=0)}")
    truth = truth_for(spec.graph, plan, model) if model is not None else None
    report, dm, res = estimate_from_biases(
        spec.graph, plan, statistics_to_biases(stats), truth, spec.row_layout,
        model_support(spec.mode, model), stats, spec.bootstrap, spec.seed, sum(shots),
    )
    out = RunOutput(noise_tag or "protocol", None, noise_std, report, res.rank, len(dm.columns),
                    dm.unidentifiable, res.null_affected)
    write_run(out_dir, noise_tag or "protocol", out, stats, spec.bins)
    return out
