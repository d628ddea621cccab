"""Repeated seeded runs, metric aggregation and CSV emission."""

from __future__ import annotations

import contextlib
import csv
import gc
import logging
import os
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .broker import DeploymentKind
from .config import ScenarioConfig
from .simulation import RunResult, Simulation

log = logging.getLogger(__name__)

RUNS_COLUMNS = [
    "run_index", "deployment", "seed", "requests", "mean_upload_ms", "var_upload_ms",
    "mean_processing_ms", "var_processing_ms", "retries", "disconnects", "broken_leases",
    "credited_currency",
]
REQUESTS_COLUMNS = [
    "request_id", "device_id", "created_at_us", "completed_at_us", "processing_ms",
    "served_by", "tier", "retries",
]
SUMMARY_COLUMNS = [
    "deployment", "runs", "requests", "mean_upload_ms", "var_upload_ms", "mean_processing_ms",
    "var_processing_ms", "var_run_mean_processing_ms", "retries", "disconnects",
    "broken_leases", "credited_currency",
]
COMPARISON_METRICS = [
    "mean_upload_ms", "var_upload_ms", "mean_processing_ms", "var_processing_ms", "requests",
    "retries", "disconnects",
]

MODEL_NOTES = {
    "rng": "PCG64 seeded by numpy SeedSequence(entropy=seed, spawn_key=sha256(label) as 8 LE uint32 words)",
    "run_seed": "derive_seed(master_seed, 'run<i>'); per-run streams: latency, arrivals, attach, policy, churn/<node>",
    "time_unit": "integer microseconds, durations rounded half-up",
    "latency": "one-way normal per message, truncated at 0 by re-sampling; request/reply pays two draws",
    "scheduling": "tier rank (intra, inter, cloud), then fewest outstanding requests, then registration order",
    "attachment": "uniform random node of the deployment within the device's zone (all zones if none local)",
    "matrix_cache": "A is uploaded at start to the attached node and piggybacks on b wherever it is missing",
    "factorization": "computed on the first solve for a device on a node; lost on disconnect",
    "cloud": "unbounded parallel servers",
    "churn": "exponential on/off per participant, frozen at the horizon",
    "arrivals": "Poisson per device, starting once that device's upload is acknowledged",
    "economics": "reward = base_rate*clamp(demand/supply,0.1,10); expired lease pays rate*minutes, broken pays 0",
    "drain": "no new arrivals after the horizon; outstanding requests run to completion",
}


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _pvar(xs: list[float]) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / len(xs)


@dataclass
class RunMetrics:
    run_index: int
    deployment: str
    seed: int
    requests: int
    mean_upload_ms: float
    var_upload_ms: float
    mean_processing_ms: float
    var_processing_ms: float
    retries: int
    disconnects: int
    broken_leases: int
    credited_currency: float
    devices: int

    @classmethod
    def from_result(cls, res: RunResult) -> "RunMetrics":
        proc = [o.processing_time_ms for o in res.outcomes]
        up = res.upload_ms
        return cls(
            run_index=res.run_index,
            deployment=res.deployment.value,
            seed=res.seed,
            requests=len(proc),
            mean_upload_ms=_mean(up),
            var_upload_ms=_pvar(up),
            mean_processing_ms=_mean(proc),
            var_processing_ms=_pvar(proc),
            retries=res.retries,
            disconnects=res.disconnects,
            broken_leases=res.lease_counts.get("broken_faulty", 0),
            credited_currency=res.credited,
            devices=len(up),
        )

    def row(self) -> list:
        return [getattr(self, c) for c in RUNS_COLUMNS]


@dataclass
class Aggregate:
    deployment: str
    runs: int
    requests: int
    mean_upload_ms: float
    var_upload_ms: float
    mean_processing_ms: float
    var_processing_ms: float
    var_run_mean_processing_ms: float
    retries: int
    disconnects: int
    broken_leases: int
    credited_currency: float

    def row(self) -> list:
        return [getattr(self, c) for c in SUMMARY_COLUMNS]


def _pooled(groups: list[tuple[int, float, float]]) -> tuple[float, float]:
    """Mean and population variance of the union of groups given (n, mean, pvar) each."""
    total = sum(n for n, _, _ in groups)
    if total == 0:
        return 0.0, 0.0
    mean = sum(n * m for n, m, _ in groups) / total
    var = sum(n * (v + (m - mean) ** 2) for n, m, v in groups) / total
    return mean, max(var, 0.0)


def aggregate(rows: list[RunMetrics]) -> Aggregate:
    up_mean, up_var = _pooled([(r.devices, r.mean_upload_ms, r.var_upload_ms) for r in rows])
    pr_mean, pr_var = _pooled([(r.requests, r.mean_processing_ms, r.var_processing_ms) for r in rows])
    return Aggregate(
        deployment=rows[0].deployment if rows else "",
        runs=len(rows),
        requests=sum(r.requests for r in rows),
        mean_upload_ms=up_mean,
        var_upload_ms=up_var,
        mean_processing_ms=pr_mean,
        var_processing_ms=pr_var,
        var_run_mean_processing_ms=_pvar([r.mean_processing_ms for r in rows if r.requests]),
        retries=sum(r.retries for r in rows),
        disconnects=sum(r.disconnects for r in rows),
        broken_leases=sum(r.broken_leases for r in rows),
        credited_currency=sum(r.credited_currency for r in rows),
    )


@dataclass
class MetricsReport:
    config: ScenarioConfig
    results: list[RunResult]
    runs: list[RunMetrics] = field(init=False)
    summary: Aggregate = field(init=False)

    def __post_init__(self) -> None:
        self.results = sorted(self.results, key=lambda r: r.run_index)
        self.runs = [RunMetrics.from_result(r) for r in self.results]
        self.summary = aggregate(self.runs)


def run_one(cfg: ScenarioConfig, run_index: int) -> RunResult:
    return Simulation(cfg, run_index).run()


def _worker_count(runs: int) -> int:
    env = os.environ.get("OECSIM_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer OECSIM_THREADS=%r", env)
    return max(1, min(cap, runs))


@contextlib.contextmanager
def _gc_paused():
    # Runs allocate many short-lived objects and few cycles; the cyclic
    # collector costs more than it frees here.
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> MetricsReport:
    cfg.validate()
    workers = _worker_count(cfg.runs) if workers is None else workers
    if workers <= 1:
        with _gc_paused():
            results = [run_one(cfg, i) for i in range(cfg.runs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, [cfg] * cfg.runs, range(cfg.runs)))
    return MetricsReport(cfg, results)


def compare_deployments(base: ScenarioConfig, kinds: list[DeploymentKind], workers: int | None = None):
    """Run ``base`` once per deployment kind; reports come back in ``kinds`` order."""
    if not kinds:
        raise ValueError("need at least one deployment kind")
    return [run_scenario(base.replace(deployment=k), workers) for k in kinds]


def comparison_table(reports: list[MetricsReport]) -> list[list]:
    header = ["metric"] + [r.summary.deployment for r in reports]
    rows = [header]
    for metric in COMPARISON_METRICS:
        rows.append([metric] + [getattr(r.summary, metric) for r in reports])
    return rows


def _write(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def emit_csv(report: MetricsReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        _write(out / "runs.csv", RUNS_COLUMNS, (r.row() for r in report.runs)),
        _write(
            out / "requests.csv",
            REQUESTS_COLUMNS,
            (
                [f"r{res.run_index}-{o.request_id}", o.device_id, o.created_at, o.completed_at,
                 o.processing_time_ms, o.served_by, o.tier.name.lower(), o.retries]
                for res in report.results
                for o in res.outcomes
            ),
        ),
        _write(out / "summary.csv", SUMMARY_COLUMNS, [report.summary.row()]),
        _write(
            out / "rewards.csv",
            ["run_index", "zone_id", "time_us", "reward_rate", "spot_floor"],
            (
                [res.run_index, zone, t, rate, floor]
                for res in report.results
                for t, zone, rate, floor in res.rewards
            ),
        ),
        _write(
            out / "ledger.csv",
            ["run_index", "participant", "balance"],
            ([res.run_index, p, b] for res in report.results for p, b in res.balances.items()),
        ),
    ]
    meta = out / "meta.txt"
    lines = ["# resolved scenario configuration", report.config.dump().rstrip(), "", "# model choices"]
    lines += [f"{k}: {v}" for k, v in MODEL_NOTES.items()]
    meta.write_text("\n".join(lines) + "\n")
    paths.append(meta)
    return paths


def emit_comparison(reports: list[MetricsReport], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, rep in enumerate(reports):
        paths += emit_csv(rep, out / f"{i}_{rep.summary.deployment}")
    table = comparison_table(reports)
    paths.append(_write(out / "comparison.csv", table[0], table[1:]))
    return paths
