"""From trap statistics to depolarizing eigenvalue estimates.

Each (ordering, trap) bin gives an empirical bias ``1 - 2 * failures/shots``.
Its logarithm is a sum of log-eigenvalues over the bin's support set, so the
bins form a linear system ``A x = log P`` with integer exponents in ``A``,
solved for ``x = log lambda`` in the least-squares sense.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse

from vbqc_aces.circuit import exact_trap_bias, support_set
from vbqc_aces.graphs import Graph
from vbqc_aces.noise import PER_QUBIT, NoiseModel, ParamKey, parameter_keys
from vbqc_aces.planner import ABSOLUTE, OrderingPlan

BIAS_FLOOR = 1e-6
ROWS_STATS = "stats"
ROWS_EQUATIONS = "equations"


@dataclass(frozen=True)
class TrapStatistic:
    ordering_id: str
    trap: int
    shots: int
    failures: int

    def __post_init__(self) -> None:
        if self.shots < 0 or not 0 <= self.failures <= self.shots:
            raise ValueError(f"inconsistent counts shots={self.shots} failures={self.failures}")


def empirical_bias(stat: TrapStatistic) -> float:
    if stat.shots < 1:
        raise ValueError("empirical bias needs at least one shot")
    return 1.0 - 2.0 * stat.failures / stat.shots


def ratio_estimate(bias_with: float, bias_without: float) -> float:
    """Eigenvalue isolated by two orderings whose supports differ in one parameter."""
    if bias_without <= 0.0:
        raise ValueError("reference bias must be positive to form a ratio")
    return bias_with / bias_without


@dataclass
class DesignMatrix:
    """Linear system in log space.

    ``terms`` maps each row to the bins it combines: ``rhs[r] = sum(sign *
    log(bias[bin]))``; for ordinary rows that is a single bin with sign +1.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    columns: list[ParamKey]
    row_labels: list[tuple]
    terms: sparse.csr_matrix
    bins: list[tuple[str, int]]
    dropped_rows: int = 0
    unidentifiable: list[ParamKey] = field(default_factory=list)

    def rows_per_column(self) -> dict[ParamKey, int]:
        counts = np.count_nonzero(self.matrix, axis=0)
        return {k: int(c) for k, c in zip(self.columns, counts)}


@dataclass
class LeastSquaresResult:
    lambdas: dict[ParamKey, float]
    log_lambdas: np.ndarray
    residual_norm: float
    rank: int
    null_affected: list[ParamKey]


def _log_bias(b: np.ndarray) -> np.ndarray:
    return np.log(np.clip(b, BIAS_FLOOR, 1.0))


def design_matrix_from_biases(
    plan: OrderingPlan,
    biases: Mapping[tuple[str, int], float],
    graph: Graph,
    mode: str | None = None,
    support=None,
    rows: str = ROWS_STATS,
) -> DesignMatrix:
    """Assemble the system from per-bin biases.

    ``rows="stats"`` gives one row per (ordering, trap) bin. ``rows="equations"``
    gives one difference row per parameter, built from the first plan
    equation naming it; this is the ratio estimator written as a linear system.
    """
    mode = mode or plan.mode
    known = set(plan.ordering_ids())
    for oid, _ in biases:
        if oid not in known:
            raise KeyError(f"statistic for unknown ordering {oid!r}")
    bins = sorted(biases)
    bin_index = {b: i for i, b in enumerate(bins)}
    bias_vec = np.array([biases[b] for b in bins], dtype=float)
    keys = parameter_keys(graph, mode, support)
    col = {k: j for j, k in enumerate(keys)}

    cache: dict[tuple[str, int], Any] = {}

    def supp(oid: str, trap: int):
        if (oid, trap) not in cache:
            cache[(oid, trap)] = support_set(graph, plan.ordering(oid), trap, mode, support)
        return cache[(oid, trap)]

    row_entries: list[dict[int, float]] = []
    row_terms: list[list[tuple[int, float]]] = []
    labels: list[tuple] = []
    dropped = 0
    if rows == ROWS_STATS:
        for b in bins:
            if biases[b] <= 0.0:
                dropped += 1
                continue
            entries: dict[int, float] = {}
            for key, mult in supp(*b).items():
                entries[col[key]] = entries.get(col[key], 0.0) + mult
            row_entries.append(entries)
            row_terms.append([(bin_index[b], 1.0)])
            labels.append(b)
    elif rows == ROWS_EQUATIONS:
        seen = set()
        for eq in plan.equations:
            if eq.param in seen or eq.param not in col:
                continue
            parts = [((eq.with_id, eq.trap), 1.0)]
            if eq.kind != ABSOLUTE:
                parts.append(((eq.without_id, eq.trap), -1.0))
            if any(p not in biases for p, _ in parts):
                continue
            if any(biases[p] <= 0.0 for p, _ in parts):
                dropped += 1
                continue
            entries = {}
            for p, sign in parts:
                for key, mult in supp(*p).items():
                    entries[col[key]] = entries.get(col[key], 0.0) + sign * mult
            entries = {j: v for j, v in entries.items() if v != 0.0}
            row_entries.append(entries)
            row_terms.append([(bin_index[p], sign) for p, sign in parts])
            labels.append((eq.with_id, eq.without_id, eq.trap))
            seen.add(eq.param)
    else:
        raise ValueError(f"unknown row layout {rows!r}")

    a = np.zeros((len(row_entries), len(keys)))
    for r, entries in enumerate(row_entries):
        for j, v in entries.items():
            a[r, j] = v
    t_rows, t_cols, t_vals = [], [], []
    for r, parts in enumerate(row_terms):
        for i, s in parts:
            t_rows.append(r)
            t_cols.append(i)
            t_vals.append(s)
    terms = sparse.csr_matrix((t_vals, (t_rows, t_cols)), shape=(len(row_entries), len(bins)))

    used = np.any(a != 0.0, axis=0) if len(row_entries) else np.zeros(len(keys), dtype=bool)
    unident = [k for k, u in zip(keys, used) if not u]
    a = a[:, used]
    columns = [k for k, u in zip(keys, used) if u]
    rhs = terms @ _log_bias(bias_vec)
    return DesignMatrix(a, rhs, columns, labels, terms, bins, dropped, unident)


def statistics_to_biases(stats: Iterable[TrapStatistic]) -> dict[tuple[str, int], float]:
    merged: dict[tuple[str, int], list[int]] = {}
    for s in stats:
        acc = merged.setdefault((s.ordering_id, s.trap), [0, 0])
        acc[0] += s.shots
        acc[1] += s.failures
    return {
        k: empirical_bias(TrapStatistic(k[0], k[1], n, f))
        for k, (n, f) in merged.items()
        if n > 0
    }


def build_design_matrix(
    plan: OrderingPlan,
    stats: Iterable[TrapStatistic],
    graph: Graph,
    mode: str | None = None,
    support=None,
    rows: str = ROWS_STATS,
) -> DesignMatrix:
    return design_matrix_from_biases(plan, statistics_to_biases(stats), graph, mode, support, rows)


def solve_log_least_squares(dm: DesignMatrix, rcond: float = 1e-10) -> LeastSquaresResult:
    """Minimum-norm least squares for ``log lambda``.

    Columns in the null space of a rank-deficient system are reported in
    ``null_affected``; their values are the minimum-norm choice, not estimates.
    """
    a, b = dm.matrix, dm.rhs
    if a.shape[1] == 0:
        return LeastSquaresResult({}, np.zeros(0), 0.0, 0, [])
    x, _, rank, sv = np.linalg.lstsq(a, b, rcond=rcond)
    null_affected: list[ParamKey] = []
    if rank < a.shape[1]:
        _, _, vt = np.linalg.svd(a)
        null = vt[rank:]
        weight = np.abs(null).max(axis=0)
        null_affected = [k for k, wgt in zip(dm.columns, weight) if wgt > 1e-9]
    resid = float(np.linalg.norm(a @ x - b))
    lambdas = {k: float(math.exp(v)) for k, v in zip(dm.columns, x)}
    return LeastSquaresResult(lambdas, x, resid, int(rank), null_affected)


def bootstrap_stderr(
    dm: DesignMatrix,
    stats: Iterable[TrapStatistic],
    resamples: int = 200,
    seed: int = 0,
) -> dict[ParamKey, float]:
    """Per-parameter standard errors from resampling each bin's shots.

    Resampling a bin's shots with replacement is a binomial draw with the
    observed failure rate, which is what is drawn here.
    """
    merged: dict[tuple[str, int], list[int]] = {}
    for s in stats:
        acc = merged.setdefault((s.ordering_id, s.trap), [0, 0])
        acc[0] += s.shots
        acc[1] += s.failures
    shots = np.array([merged[b][0] for b in dm.bins])
    fails = np.array([merged[b][1] for b in dm.bins])
    if dm.matrix.shape[1] == 0 or resamples < 2:
        return {k: float("nan") for k in dm.columns}
    rng = np.random.default_rng(seed)
    draws = rng.binomial(shots[:, None], (fails / shots)[:, None], size=(len(shots), resamples))
    biases = 1.0 - 2.0 * draws / shots[:, None]
    rhs = dm.terms @ _log_bias(biases)
    pinv = np.linalg.pinv(dm.matrix)
    lam = np.exp(pinv @ rhs)
    sd = lam.std(axis=1, ddof=1)
    return {k: float(s) for k, s in zip(dm.columns, sd)}


# --- comparison with ground truth ----------------------------------------------


def effective_truth(graph: Graph, plan: OrderingPlan, model: NoiseModel) -> dict[ParamKey, float]:
    """Ground truth for each plan parameter as the exact ratio of its first equation.

    For a per_qubit plan and a per_qubit model this equals the model
    eigenvalue; for a per_edge plan it defines the effective edge parameter.
    """
    truth: dict[ParamKey, float] = {}
    for eq in plan.equations:
        if eq.param in truth:
            continue
        w = exact_trap_bias(graph, plan.ordering(eq.with_id), model, eq.trap)
        if eq.kind == ABSOLUTE:
            truth[eq.param] = w
        else:
            truth[eq.param] = w / exact_trap_bias(graph, plan.ordering(eq.without_id), model, eq.trap)
    return truth


@dataclass
class EstimateRow:
    param: ParamKey
    lambda_hat: float
    lambda_true: float | None
    rows: int
    stderr: float | None = None

    @property
    def diff(self) -> float | None:
        return None if self.lambda_true is None else self.lambda_hat - self.lambda_true

    @property
    def abs_diff_x100(self) -> float | None:
        d = self.diff
        return None if d is None else 100.0 * abs(d)


@dataclass
class EstimateReport:
    mode: str
    rows: list[EstimateRow]
    residual_norm: float
    shots_used: int
    dropped_rows: int = 0

    def diffs(self) -> np.ndarray:
        return np.array([r.diff for r in self.rows if r.diff is not None])

    def summary(self) -> dict[str, float]:
        d = self.diffs()
        if d.size == 0:
            return {"mean_diff": float("nan"), "std_diff": float("nan"), "count": 0}
        return {
            "mean_diff": float(d.mean()),
            "std_diff": float(d.std(ddof=1)) if d.size > 1 else 0.0,
            "count": int(d.size),
        }


def error_report(
    estimates: Mapping[ParamKey, float],
    truth: Mapping[ParamKey, float] | None = None,
    rows: Mapping[ParamKey, int] | None = None,
    stderr: Mapping[ParamKey, float] | None = None,
    mode: str = PER_QUBIT,
    residual_norm: float = 0.0,
    shots_used: int = 0,
    dropped_rows: int = 0,
) -> EstimateReport:
    if truth is not None and set(truth) != set(estimates):
        raise ValueError("estimate and truth parameter sets differ")
    out = [
        EstimateRow(
            k,
            estimates[k],
            None if truth is None else truth[k],
            (rows or {}).get(k, 0),
            None if stderr is None else stderr.get(k),
        )
        for k in sorted(estimates)
    ]
    return EstimateReport(mode, out, residual_norm, shots_used, dropped_rows)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def histogram(values: Sequence[float], bins: int = 30, symmetric: bool = True) -> Histogram:
    """Fixed-width bins; symmetric about zero for signed errors."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return Histogram(np.zeros(1), np.zeros(0, dtype=int))
    hi = float(np.max(np.abs(v))) if symmetric else float(v.max())
    lo = -hi if symmetric else float(min(v.min(), 0.0))
    if hi <= lo:
        hi = lo + 1e-12
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return Histogram(edges, counts)


# --- CSV -------------------------------------------------------------------------

STATS_COLUMNS = ["ordering_id", "trap_vertex", "shots", "failures"]
ESTIMATE_COLUMNS = [
    "param_edge_u", "param_edge_v", "param_qubit", "lambda_hat", "lambda_true",
    "diff", "abs_diff_x100", "rows", "stderr",
]
HISTOGRAM_COLUMNS = ["bin_left", "bin_right", "count", "shots", "noise_std"]


def fmt(x: float | None) -> str:
    """9 significant digits; empty for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.9g}"


def write_stats_csv(path: str | Path, stats: Iterable[TrapStatistic]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_COLUMNS)
        for s in stats:
            w.writerow([s.ordering_id, s.trap, s.shots, s.failures])


def read_stats_csv(path: str | Path) -> list[TrapStatistic]:
    with open(path, newline="") as fh:
        return [
            TrapStatistic(row["ordering_id"], int(row["trap_vertex"]), int(row["shots"]), int(row["failures"]))
            for row in csv.DictReader(fh)
        ]


def write_estimates_csv(path: str | Path, report: EstimateReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_COLUMNS)
        for r in report.rows:
            if report.mode == PER_QUBIT:
                (u, v), q = r.param
            else:
                (u, v), q = r.param, None
            w.writerow([
                u, v, "" if q is None else q, fmt(r.lambda_hat), fmt(r.lambda_true),
                fmt(r.diff), fmt(r.abs_diff_x100), r.rows, fmt(r.stderr),
            ])


def write_histogram_csv(path: str | Path, blocks: Iterable[tuple[Histogram, int, float | None]]) -> None:
    """Rows for several histograms, each tagged with its shot budget and noise std."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTOGRAM_COLUMNS)
        for hist, shots, noise_std in blocks:
            for left, right, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
                w.writerow([fmt(float(left)), fmt(float(right)), int(c), shots, fmt(noise_std)])
