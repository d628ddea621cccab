"""Compute-node lifecycle: leases, on/off churn, soft-state caches and FIFO service."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .engine import EventKind, EventQueue, RngStream, ms_to_us


class NodeKind(enum.Enum):
    PARTICIPANT_DEVICE = "participant"
    DEDICATED_FOG = "fog"
    CLOUD_DATACENTER = "cloud"

    @property
    def churns(self) -> bool:
        return self is NodeKind.PARTICIPANT_DEVICE


class LeaseStatus(enum.Enum):
    ACTIVE = "active"
    EXPIRED = "expired"
    BROKEN_FAULTY = "broken_faulty"


class LeaseError(RuntimeError):
    pass


class NodeUnavailable(RuntimeError):
    """A request reached a node that cannot serve it; the broker must retry."""


@dataclass
class Lease:
    lease_id: int
    node_id: str
    start: int  # us
    duration_ms: float
    price_rate: float  # currency per minute
    status: LeaseStatus = LeaseStatus.ACTIVE
    closed_at: int | None = None

    @property
    def expires_at(self) -> int:
        return self.start + ms_to_us(self.duration_ms)

    @property
    def duration_minutes(self) -> float:
        return self.duration_ms / 60_000.0

    def _close(self, status: LeaseStatus, now: int) -> None:
        if self.status is not LeaseStatus.ACTIVE:
            raise LeaseError(f"lease {self.lease_id} already {self.status.value}")
        self.status = status
        self.closed_at = now

    def expire(self, now: int) -> None:
        self._close(LeaseStatus.EXPIRED, now)

    def withdraw(self, now: int) -> None:
        """Participant leaves the pool. Before the term ends this marks the lease faulty."""
        if now < self.expires_at:
            self._close(LeaseStatus.BROKEN_FAULTY, now)
        else:
            self._close(LeaseStatus.EXPIRED, self.expires_at)


@dataclass(frozen=True)
class ChurnProcess:
    mean_uptime_s: float = 60.0
    mean_downtime_s: float = 10.0

    def __post_init__(self) -> None:
        if not (self.mean_uptime_s > 0 and self.mean_downtime_s > 0):
            raise ValueError("churn means must be positive")


@dataclass(frozen=True)
class ServiceProfile:
    solve_time_ms: float = 2.0
    factorization_time_ms: float = 8.0
    servers: int | None = 1  # None: unbounded parallelism (the cloud)

    def __post_init__(self) -> None:
        if not (self.solve_time_ms > 0 and self.factorization_time_ms > 0):
            raise ValueError("service times must be positive")


@dataclass(eq=False)
class NodeState:
    node_id: str
    kind: NodeKind
    zone_id: int | None
    index: int
    profile: ServiceProfile
    connected: bool = True
    # Soft-state caches keyed by the uploading device.
    has_a: set = field(default_factory=set)
    has_factorization: set = field(default_factory=set)
    # Requests assigned here and not yet finished, in assignment order.
    queue: dict = field(default_factory=dict)
    busy_until: int = 0
    busy_us: int = 0
    epoch: int = 0
    lease: Lease | None = None

    @property
    def queue_length(self) -> int:
        return len(self.queue)


def open_lease(
    node: NodeState,
    duration_ms: float,
    price_rate: float,
    now: int,
    lease_id: int = 0,
    queue: EventQueue | None = None,
) -> Lease:
    if node.kind is not NodeKind.PARTICIPANT_DEVICE:
        raise LeaseError(f"{node.node_id} is not a participant device")
    if node.lease is not None and node.lease.status is LeaseStatus.ACTIVE:
        raise LeaseError(f"{node.node_id} already holds active lease {node.lease.lease_id}")
    if duration_ms <= 0:
        raise LeaseError("lease duration must be positive")
    lease = Lease(lease_id, node.node_id, now, duration_ms, price_rate)
    node.lease = lease
    if queue is not None:
        queue.schedule(lease.expires_at, EventKind.LEASE_EXPIRY, lease)
    return lease


def next_churn_transition(churn: ChurnProcess, currently_up: bool, rng: RngStream) -> float:
    """Seconds until the node flips state."""
    mean = churn.mean_uptime_s if currently_up else churn.mean_downtime_s
    while True:
        d = mean * rng.exponential()
        if d > 0.0:
            return d


def on_disconnect(state: NodeState, now: int) -> list:
    """Drop the node's soft state; returns the ids of requests that must be retried."""
    if not state.connected:
        raise RuntimeError(f"{state.node_id} is already disconnected")
    if not state.kind.churns:
        raise RuntimeError(f"{state.node_id} ({state.kind.value}) never disconnects")
    state.connected = False
    state.epoch += 1
    state.has_a.clear()
    state.has_factorization.clear()
    failed = list(state.queue)
    state.queue.clear()
    state.busy_until = now
    if state.lease is not None and state.lease.status is LeaseStatus.ACTIVE:
        state.lease.withdraw(now)
    return failed


def on_reconnect(state: NodeState, now: int) -> None:
    if state.connected:
        raise RuntimeError(f"{state.node_id} is already connected")
    state.connected = True
    state.epoch += 1
    state.busy_until = now


def serve(state: NodeState, device, now: int) -> int:
    """Enqueue one solve for ``device`` and return its completion time (us).

    The first solve after the factorization was lost pays the factorization
    cost; later ones reuse it.
    """
    if not state.connected:
        raise NodeUnavailable(state.node_id)
    if device not in state.has_a:
        raise NodeUnavailable(f"{state.node_id} holds no matrix for {device!r}")
    profile = state.profile
    service_ms = profile.solve_time_ms
    if device not in state.has_factorization:
        service_ms += profile.factorization_time_ms
        state.has_factorization.add(device)
    service = ms_to_us(service_ms)
    if profile.servers is None:
        start = now
    else:
        start = max(now, state.busy_until)
        state.busy_until = start + service
    state.busy_us += service
    return start + service
