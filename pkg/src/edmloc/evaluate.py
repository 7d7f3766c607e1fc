"""Batch experiment driver: seeded scenario sweeps, greedy-assigned errors,
box statistics, and estimator-only runtime benchmarks.

Scenario runs are independent and deterministic per seed, so the per-run
CSV is byte-identical across invocations and worker counts; wall-clock
numbers live only in the aggregate report and bench output.
"""

from __future__ import annotations

import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .doa import DoaEstimatorConfig, estimate_doas_from_signals
from .errors import InvalidInput
from .position import PositionEstimatorConfig, estimate_positions_from_signals
from .sim import Scenario, ScenarioConfig, TruthOracle, render_scenario
from .srp import SrpGrid, srp_doas_from_signals, srp_positions_from_signals

REPORT_SCHEMA_VERSION = 1

POSITION_METHODS = ("edm-pos", "srp-pos")
DOA_METHODS = ("edm-doa", "srp-doa")


def error_position_cm(truth, estimate) -> float:
    """Euclidean position error in centimeters."""
    t = np.asarray(truth, dtype=float)
    e = np.asarray(estimate, dtype=float)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(e))):
        raise InvalidInput("positions must be finite")
    return 100.0 * float(np.linalg.norm(t - e))


def error_doa_deg(truth, estimate) -> float:
    """Angle between two direction vectors in degrees."""
    t = np.asarray(truth, dtype=float)
    e = np.asarray(estimate, dtype=float)
    nt, ne = np.linalg.norm(t), np.linalg.norm(e)
    if nt == 0.0 or ne == 0.0 or not (np.all(np.isfinite(t)) and np.all(np.isfinite(e))):
        raise InvalidInput("directions must be finite and nonzero")
    c = np.clip(np.dot(t, e) / (nt * ne), -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def greedy_assign(truths, estimates, metric) -> list[tuple[int, int]]:
    """Pair estimates to truths by repeatedly taking the globally closest
    unpaired pair; ties break toward the lower truth index, then the lower
    estimate index. Returns (truth_index, estimate_index) pairs in selection
    order; with fewer estimates than truths the extra truths stay unpaired.
    """
    if len(estimates) > len(truths):
        raise InvalidInput("more estimates than truths")
    cost = np.array([[metric(t, e) for e in estimates] for t in truths], dtype=float)
    pairs: list[tuple[int, int]] = []
    used_t: set[int] = set()
    used_e: set[int] = set()
    for _ in range(min(len(truths), len(estimates))):
        best = None
        for ti in range(len(truths)):
            if ti in used_t:
                continue
            for ei in range(len(estimates)):
                if ei in used_e:
                    continue
                key = (cost[ti, ei], ti, ei)
                if best is None or key < best:
                    best = key
        _, ti, ei = best
        pairs.append((ti, ei))
        used_t.add(ti)
        used_e.add(ei)
    return pairs


@dataclass(frozen=True)
class RunResult:
    """Errors of every true source for one (scenario, method) run."""

    distance: float
    scenario_index: int
    method: str
    errors: tuple[float, ...]
    runtime_ms: float
    shortfall: bool
    degenerate: bool


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep over source-1 distances with a fixed number of seeded runs each."""

    methods: tuple[str, ...] = POSITION_METHODS
    distances: tuple[float, ...] = (2.0,)
    runs: int = 10
    base_seed: int = 0
    workers: int = 1
    fixed_distances: tuple[float, ...] = (2.0,)  # remaining sources (source 2, ...)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    position_estimator: PositionEstimatorConfig = field(default_factory=PositionEstimatorConfig)
    doa_estimator: DoaEstimatorConfig = field(default_factory=DoaEstimatorConfig)
    srp_position_grid: SrpGrid = field(default_factory=SrpGrid.position_default)
    srp_doa_grid: SrpGrid = field(default_factory=SrpGrid.doa_default)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in POSITION_METHODS + DOA_METHODS]
        if bad:
            raise InvalidInput(f"unknown methods {bad}")
        if self.runs < 1:
            raise InvalidInput("runs must be >= 1")


def _scenario_seed(base_seed: int, distance: float, index: int) -> int:
    ss = np.random.SeedSequence([base_seed, int(round(distance * 1000)), index])
    return int(ss.generate_state(1)[0])


def _sentinel_error(cfg: ScenarioConfig, kind: str) -> float:
    if kind == "position":
        return 100.0 * float(np.linalg.norm(cfg.room))
    return 180.0


def _assigned_errors(truths, estimates, metric, sentinel) -> tuple[float, ...]:
    errors = [sentinel] * len(truths)
    for ti, ei in greedy_assign(truths, estimates[: len(truths)], metric):
        errors[ti] = metric(truths[ti], estimates[ei])
    return tuple(errors)


def run_methods(scenario: Scenario, signals, cfg: ExperimentConfig, distance: float, index: int):
    """Run every configured method on already synthesized signals."""
    array = scenario.mic_array()
    oracle = TruthOracle(scenario)
    n_src = scenario.source_positions.shape[0]
    true_pos = [scenario.source_positions[s] for s in range(n_src)]
    true_doa = [oracle.doa_vector(s) for s in range(n_src)]
    sample_rate = scenario.config.sample_rate
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        shortfall = False
        degenerate = False
        if method == "edm-pos":
            batch = estimate_positions_from_signals(
                signals, sample_rate, array, cfg.position_estimator.with_sources(n_src)
            )
            estimates = [e.position for e in batch.estimates]
            shortfall = batch.shortfall
            degenerate = any(e.degenerate for e in batch.estimates)
        elif method == "srp-pos":
            values, shortfall = srp_positions_from_signals(
                signals, sample_rate, array, scenario.config.room, n_src, cfg.srp_position_grid
            )
            estimates = [v.location for v in values]
        elif method == "edm-doa":
            batch = estimate_doas_from_signals(
                signals, sample_rate, array, cfg.doa_estimator.with_sources(n_src)
            )
            estimates = [e.direction for e in batch.estimates]
            shortfall = batch.shortfall
        else:
            values, shortfall = srp_doas_from_signals(
                signals, sample_rate, array, n_src, cfg.srp_doa_grid
            )
            estimates = [v.location for v in values]
        runtime_ms = 1000.0 * (time.perf_counter() - t0)

        if method in POSITION_METHODS:
            errors = _assigned_errors(
                true_pos, estimates, error_position_cm, _sentinel_error(scenario.config, "position")
            )
        else:
            errors = _assigned_errors(
                true_doa, estimates, error_doa_deg, _sentinel_error(scenario.config, "doa")
            )
        rows.append(
            RunResult(
                distance=distance,
                scenario_index=index,
                method=method,
                errors=errors,
                runtime_ms=runtime_ms,
                shortfall=shortfall,
                degenerate=degenerate,
            )
        )
    return rows


def _scenario_task(args) -> list[RunResult]:
    cfg, distance, index = args
    seed = _scenario_seed(cfg.base_seed, distance, index)
    scen_cfg = replace(cfg.scenario, source_distances=(distance, *cfg.fixed_distances))
    scenario, signals = render_scenario(scen_cfg, seed)
    return run_methods(scenario, signals, cfg, distance, index)


@dataclass(frozen=True)
class MethodAggregate:
    median: float
    q1: float
    q3: float
    outliers: int
    mean_runtime_ms: float
    count: int
    per_source_median: tuple[float, ...]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[RunResult]

    def csv(self) -> str:
        """Deterministic per-run table; wall-clock columns are deliberately
        omitted so repeated runs are byte-identical."""
        buf = io.StringIO()
        buf.write("distance_m,scenario,method,source,error,shortfall,degenerate\n")
        for row in self.rows:
            for s, err in enumerate(row.errors):
                buf.write(
                    f"{row.distance:.6g},{row.scenario_index},{row.method},{s + 1},"
                    f"{err:.9g},{int(row.shortfall)},{int(row.degenerate)}\n"
                )
        return buf.getvalue()

    def aggregate(self) -> dict:
        report_entries = []
        for method in self.config.methods:
            for distance in self.config.distances:
                rows = [
                    r for r in self.rows if r.method == method and r.distance == distance
                ]
                if not rows:
                    continue
                pooled = np.array([e for r in rows for e in r.errors])
                q1, med, q3 = np.percentile(pooled, [25, 50, 75])
                iqr = q3 - q1
                outliers = int(np.sum((pooled < q1 - 1.5 * iqr) | (pooled > q3 + 1.5 * iqr)))
                n_src = len(rows[0].errors)
                per_source = tuple(
                    float(np.median([r.errors[s] for r in rows])) for s in range(n_src)
                )
                report_entries.append(
                    {
                        "method": method,
                        "distance_m": distance,
                        "median": float(med),
                        "q1": float(q1),
                        "q3": float(q3),
                        "outliers": outliers,
                        "mean_runtime_ms": float(np.mean([r.runtime_ms for r in rows])),
                        "count": len(rows),
                        "per_source_median": list(per_source),
                        "shortfall_runs": int(sum(r.shortfall for r in rows)),
                    }
                )
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "unit": "cm" if set(self.config.methods) & set(POSITION_METHODS) else "deg",
            "entries": report_entries,
        }


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute the full sweep; deterministic given the config.

    Scenarios run in a process pool when workers > 1; results are collected
    in task order, so the output is identical for any worker count.
    """
    tasks = [(cfg, d, i) for d in cfg.distances for i in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            nested = list(pool.map(_scenario_task, tasks, chunksize=1))
    else:
        nested = [_scenario_task(t) for t in tasks]
    rows = [row for group in nested for row in group]
    return ExperimentResult(config=cfg, rows=rows)


def evaluation_checks(result: ExperimentResult, max_edm_pos_cm: float = 5.0, max_edm_doa_deg: float = 4.0):
    """Accuracy-ordering checks over an experiment report.

    Verifies, per distance, that the EDM median does not exceed the SRP
    median, and that the EDM medians respect the absolute bounds (position
    bound applies at distance 2 m, the DOA bound at every distance).
    Returns a list of (name, passed, detail).
    """
    report = result.aggregate()
    by_key = {(e["method"], e["distance_m"]): e for e in report["entries"]}
    checks = []
    for edm, srp, unit in (("edm-pos", "srp-pos", "cm"), ("edm-doa", "srp-doa", "deg")):
        for distance in result.config.distances:
            if (edm, distance) not in by_key:
                continue
            e = by_key[(edm, distance)]["median"]
            if (srp, distance) in by_key:
                s = by_key[(srp, distance)]["median"]
                checks.append(
                    (
                        f"{edm} median <= {srp} median @ {distance} m",
                        e <= s,
                        f"{e:.3f} vs {s:.3f} {unit}",
                    )
                )
            if edm == "edm-pos" and distance == 2.0:
                checks.append(
                    (f"edm-pos median < {max_edm_pos_cm} cm @ 2 m", e < max_edm_pos_cm, f"{e:.3f} cm")
                )
            if edm == "edm-doa":
                checks.append(
                    (
                        f"edm-doa median < {max_edm_doa_deg} deg @ {distance} m",
                        e < max_edm_doa_deg,
                        f"{e:.3f} deg",
                    )
                )
    return checks


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    repetitions: int = 5
    distance: float = 2.0
    methods: tuple[str, ...] = POSITION_METHODS + DOA_METHODS
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    position_estimator: PositionEstimatorConfig = field(default_factory=PositionEstimatorConfig)
    doa_estimator: DoaEstimatorConfig = field(default_factory=DoaEstimatorConfig)
    srp_position_grid: SrpGrid = field(default_factory=SrpGrid.position_default)
    srp_doa_grid: SrpGrid = field(default_factory=SrpGrid.doa_default)


def bench(cfg: BenchConfig) -> dict:
    """Median estimator-only runtimes over repeated runs of one scenario.

    Position methods time against a distributed-array scenario, DOA methods
    against a compact-array scenario; a warm-up run per method is discarded.
    """
    exp = ExperimentConfig(
        methods=cfg.methods,
        distances=(cfg.distance,),
        runs=1,
        base_seed=cfg.seed,
        scenario=cfg.scenario,
        position_estimator=cfg.position_estimator,
        doa_estimator=cfg.doa_estimator,
        srp_position_grid=cfg.srp_position_grid,
        srp_doa_grid=cfg.srp_doa_grid,
    )
    rendered = {}
    for mode, methods in (("distributed", POSITION_METHODS), ("compact", DOA_METHODS)):
        if set(methods) & set(cfg.methods):
            scen_cfg = replace(cfg.scenario, mode=mode, source_distances=(cfg.distance, *exp.fixed_distances))
            seed = _scenario_seed(cfg.seed, cfg.distance, 0)
            rendered[mode] = render_scenario(scen_cfg, seed)

    medians = {}
    for method in cfg.methods:
        mode = "distributed" if method in POSITION_METHODS else "compact"
        scenario, signals = rendered[mode]
        single = replace(exp, methods=(method,))
        run_methods(scenario, signals, single, cfg.distance, 0)  # warm-up
        times = []
        for _ in range(max(cfg.repetitions, 1)):
            rows = run_methods(scenario, signals, single, cfg.distance, 0)
            times.append(rows[0].runtime_ms / 1000.0)
        medians[method] = float(np.median(times))

    ratios = {}
    if "edm-pos" in medians and "srp-pos" in medians:
        ratios["srp-pos/edm-pos"] = medians["srp-pos"] / medians["edm-pos"]
    if "edm-doa" in medians and "srp-doa" in medians:
        ratios["srp-doa/edm-doa"] = medians["srp-doa"] / medians["edm-doa"]
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "median_runtime_s": medians,
        "ratios": ratios,
        "repetitions": cfg.repetitions,
    }


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
