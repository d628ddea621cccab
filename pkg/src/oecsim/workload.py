"""Offload workload: task payloads, request records, Poisson arrivals and the LU kernel."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import RngStream, s_to_us
from .network import LatencyModel, LatencyTier, sample_one_way_latency, transfer_time
from .nodes import ServiceProfile

PIVOT_TOL = 1e-12


class SingularMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    n: int = 147
    nnz: int = 1294

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not 0 <= self.nnz <= self.n * self.n:
            raise ValueError("nnz must lie in [0, n*n]")

    @property
    def payload_a_bytes(self) -> int:
        # (row, col) index pair plus a float64 value per stored entry
        return 16 * self.nnz

    @property
    def payload_b_bytes(self) -> int:
        return 8 * self.n

    @property
    def payload_x_bytes(self) -> int:
        return 8 * self.n


@dataclass(eq=False, slots=True)
class Request:
    request_id: int
    device: str
    created_at: int
    history: list[str] = field(default_factory=list)
    node: object = None  # NodeState currently serving
    attempt: int = 0
    done: bool = False

    @property
    def retry_count(self) -> int:
        return max(len(self.history) - 1, 0)


@dataclass(slots=True)
class RequestOutcome:
    request_id: int
    device_id: str
    created_at: int
    completed_at: int
    served_by: str
    tier: LatencyTier
    retries: int

    @property
    def processing_time_ms(self) -> float:
        return (self.completed_at - self.created_at) / 1000.0


def generate_arrivals(rate_per_s: float, horizon_s: float, rng: RngStream) -> list[int]:
    """Poisson arrival instants in [0, horizon), in microseconds."""
    if rate_per_s <= 0 or horizon_s <= 0:
        return []
    horizon_us = s_to_us(horizon_s)
    mean_gap = 1.0 / rate_per_s
    out = []
    t = 0.0
    while True:
        t += mean_gap * rng.exponential()
        tu = s_to_us(t)
        if tu >= horizon_us:
            return out
        out.append(tu)


def upload_time_ms(
    spec: TaskSpec,
    model: LatencyModel,
    tier: LatencyTier,
    rng: RngStream,
    bandwidth_bytes_per_s: float = float("inf"),
) -> float:
    """Send A to the target and wait for its acknowledgement."""
    there = sample_one_way_latency(model, tier, rng)
    push = transfer_time(spec.payload_a_bytes, bandwidth_bytes_per_s)
    back = sample_one_way_latency(model, tier, rng)
    return there + push + back


# ---------------------------------------------------------------------------
# Dense LU kernel, used to calibrate service times.


def lu_factor(a) -> tuple[np.ndarray, np.ndarray]:
    """Doolittle LU with partial pivoting.

    Returns the packed factors (unit-lower L below the diagonal, U on and
    above it) and the row permutation ``piv`` such that ``A[piv] = L @ U``.
    """
    lu = np.array(a, dtype=float, copy=True)
    if lu.ndim != 2 or lu.shape[0] != lu.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {lu.shape}")
    n = lu.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= PIVOT_TOL:
            raise SingularMatrixError(f"pivot {lu[p, k]:.3e} at column {k}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, piv


def lu_solve_factored(lu: np.ndarray, piv: np.ndarray, b) -> np.ndarray:
    y = np.asarray(b, dtype=float)[piv].copy()
    n = lu.shape[0]
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1 :] @ y[i + 1 :]) / lu[i, i]
    return y


def lu_solve(a, b) -> np.ndarray:
    lu, piv = lu_factor(a)
    b = np.asarray(b, dtype=float)
    if b.shape != (lu.shape[0],):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({lu.shape[0]},)")
    return lu_solve_factored(lu, piv, b)


def read_coordinate_matrix(path) -> np.ndarray:
    """Load a dense matrix from ``n nnz`` followed by 1-based ``row col value`` lines."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln[0].startswith(("%", "#"))]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: missing 'n nnz' header")
    n, nnz = int(lines[0][0]), int(lines[0][1])
    entries = lines[1:]
    if len(entries) != nnz:
        raise ValueError(f"{path}: header says {nnz} entries, found {len(entries)}")
    a = np.zeros((n, n))
    for lineno, ent in enumerate(entries, start=2):
        if len(ent) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'row col value'")
        r, c = int(ent[0]), int(ent[1])
        if not (1 <= r <= n and 1 <= c <= n):
            raise ValueError(f"{path}:{lineno}: index out of range")
        a[r - 1, c - 1] += float(ent[2])
    return a


def well_conditioned_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    a[np.diag_indices(n)] += n * np.sign(a.diagonal() + 0.5)
    return a


def calibrate_service_time(n: int = 147, reps: int = 20, matrix=None, seed: int = 0) -> ServiceProfile:
    """Median wall time of factorization and of a cached-factor solve, in ms."""
    if not 1 <= n <= 1000:
        raise ValueError("n must lie in [1, 1000]")
    if reps < 5:
        raise ValueError("need at least 5 repetitions")
    rng = np.random.default_rng(seed)
    a = well_conditioned_matrix(n, rng) if matrix is None else np.asarray(matrix, dtype=float)
    b = rng.uniform(-1.0, 1.0, size=a.shape[0])
    lu_solve(a, b)  # warm-up
    fact, solve = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        lu, piv = lu_factor(a)
        t1 = time.perf_counter()
        lu_solve_factored(lu, piv, b)
        t2 = time.perf_counter()
        fact.append((t1 - t0) * 1000.0)
        solve.append((t2 - t1) * 1000.0)
    return ServiceProfile(
        solve_time_ms=max(statistics.median(solve), 1e-6),
        factorization_time_ms=max(statistics.median(fact), 1e-6),
    )
