"""Centralized broker: resource profiling, device attachment, request placement and monitoring."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .engine import RngStream
from .network import CLOUD_ID, Topology
from .nodes import Lease, LeaseStatus, NodeKind, NodeState, ServiceProfile


class DeploymentKind(enum.Enum):
    CLOUD_ONLY = "cloud"
    DEDICATED_FOGS = "fog"
    OEC_CLOUD = "oec"


class SchedulingPolicy(enum.Enum):
    NEAREST_TIER_FIRST = "nearest_tier_first"
    RANDOM_FEASIBLE = "random_feasible"
    CLOUD_ONLY = "cloud_only"


class RegistrationError(ValueError):
    pass


class AttachmentError(ValueError):
    pass


@dataclass
class ResourceRecord:
    node_id: str
    kind: NodeKind
    zone_id: int | None
    profile: ServiceProfile
    registered_at: int
    configured_lifetime_ms: float
    predicted_lifetime_ms: float
    lease: Lease | None = None
    up_intervals: list[tuple[int, int]] = field(default_factory=list)
    up_since: int | None = None
    samples_up: int = 0
    samples_total: int = 0

    @property
    def availability(self) -> float:
        if self.samples_total == 0:
            return 1.0
        return self.samples_up / self.samples_total


@dataclass
class ResourceDatabase:
    records: dict[str, ResourceRecord] = field(default_factory=dict)
    leases: list[Lease] = field(default_factory=list)
    # (time_us, node_id, utilization, connected)
    samples: list[tuple[int, str, float, bool]] = field(default_factory=list)
    # (time_us, request_id, node_id, attempt)
    request_log: list[tuple[int, int, str, int]] = field(default_factory=list)

    def lease_counts(self) -> dict[LeaseStatus, int]:
        counts = {s: 0 for s in LeaseStatus}
        for lease in self.leases:
            counts[lease.status] += 1
        return counts


class Broker:
    """Single broker with an instantaneous global view of every compute node."""

    def __init__(
        self,
        topology: Topology,
        policy: SchedulingPolicy = SchedulingPolicy.NEAREST_TIER_FIRST,
        rng: RngStream | None = None,
        require_lease: bool = False,
    ) -> None:
        self.topology = topology
        self.policy = policy
        self.rng = rng
        self.require_lease = require_lease
        self.db = ResourceDatabase()
        self.nodes: dict[str, NodeState] = {}
        self.cloud: NodeState | None = None
        self._edge: list[NodeState] = []
        self._tiers: dict[int | None, tuple[list[NodeState], list[NodeState]]] = {}
        self._device_tiers: dict[str, tuple[list[NodeState], list[NodeState]]] = {}

    # -- registration ------------------------------------------------------

    def register_and_profile(
        self,
        node_id: str,
        kind: NodeKind,
        zone_id: int | None,
        profile: ServiceProfile,
        now: int = 0,
        mean_uptime_s: float = math.inf,
    ) -> ResourceRecord:
        if node_id in self.db.records:
            raise RegistrationError(f"{node_id} is already registered")
        if kind is NodeKind.CLOUD_DATACENTER:
            if node_id != CLOUD_ID:
                raise RegistrationError(f"the cloud must be registered as {CLOUD_ID!r}")
            zone_id = None
        else:
            if zone_id is None:
                raise RegistrationError(f"{node_id} needs a zone")
            if node_id not in self.topology.placement:
                self.topology.add(node_id, zone_id, CLOUD_ID)
        lifetime = mean_uptime_s * 1000.0 if kind.churns else math.inf
        rec = ResourceRecord(node_id, kind, zone_id, profile, now, lifetime, lifetime, up_since=now)
        self.db.records[node_id] = rec
        state = NodeState(node_id, kind, zone_id, len(self.nodes), profile)
        self.nodes[node_id] = state
        if kind is NodeKind.CLOUD_DATACENTER:
            self.cloud = state
        else:
            self._edge.append(state)
        self._tiers.clear()
        self._device_tiers.clear()
        return rec

    # -- attachment --------------------------------------------------------

    def attach_devices(self, devices: list[str], rng: RngStream, kind: NodeKind | None) -> dict[str, str]:
        """Random matching of devices onto compute nodes of ``kind``.

        A device picks uniformly among matching nodes in its own zone, or among
        all matching nodes when its zone has none. ``kind=None`` attaches every
        device straight to the cloud.
        """
        mapping = {}
        if kind is None:
            if self.cloud is None:
                raise AttachmentError("no cloud registered")
            for dev in devices:
                self.topology.attach(dev, CLOUD_ID)
                mapping[dev] = CLOUD_ID
            return mapping
        targets = [n for n in self._edge if n.kind is kind]
        if not targets:
            raise AttachmentError(f"no {kind.value} nodes to attach devices to")
        by_zone: dict[int | None, list[NodeState]] = {}
        for n in targets:
            by_zone.setdefault(n.zone_id, []).append(n)
        for dev in devices:
            pool = by_zone.get(self.topology.zone_of(dev), targets)
            choice = pool[rng.randbelow(len(pool))]
            self.topology.attach(dev, choice.node_id)
            mapping[dev] = choice.node_id
        return mapping

    # -- placement ---------------------------------------------------------

    def schedulable(self, node: NodeState) -> bool:
        if not node.connected:
            return False
        if self.require_lease and node.kind.churns:
            return node.lease is not None and node.lease.status is LeaseStatus.ACTIVE
        return True

    def _tier_lists(self, zone: int | None) -> tuple[list[NodeState], list[NodeState]]:
        lists = self._tiers.get(zone)
        if lists is None:
            # Sorted by id so the first least-loaded node found is the lowest id.
            edge = sorted(self._edge, key=lambda n: n.node_id)
            intra = [n for n in edge if n.zone_id == zone]
            inter = [n for n in edge if n.zone_id != zone]
            lists = self._tiers[zone] = (intra, inter)
        return lists

    def select_target(self, device: str, exclude: NodeState | None = None) -> NodeState:
        """Pick the compute node for a request issued by ``device``."""
        if self.cloud is None:
            raise AttachmentError("no cloud registered")
        if self.policy is SchedulingPolicy.CLOUD_ONLY:
            return self.cloud
        if self.policy is SchedulingPolicy.RANDOM_FEASIBLE:
            pool = [n for n in self._edge if n is not exclude and self.schedulable(n)]
            pool.append(self.cloud)
            return pool[self.rng.randbelow(len(pool))]
        tiers = self._device_tiers.get(device)
        if tiers is None:
            tiers = self._device_tiers[device] = self._tier_lists(self.topology.zone_of(device))
        for tier in tiers:
            best = None
            for n in tier:
                if n is exclude or not n.connected:
                    continue
                if self.require_lease and not self.schedulable(n):
                    continue
                if best is None or len(n.queue) < len(best.queue):
                    best = n
            if best is not None:
                return best
        return self.cloud

    def log_assignment(self, now: int, request_id: int, node: NodeState, attempt: int) -> None:
        self.db.request_log.append((now, request_id, node.node_id, attempt))

    def handle_failure(self, request, failed_node: NodeState, now: int) -> NodeState:
        """Choose a new home for a request whose node dropped it."""
        target = self.select_target(request.device, exclude=failed_node)
        return target

    # -- monitoring --------------------------------------------------------

    def record_monitoring_sample(self, node_id: str, now: int, utilization: float, connected: bool) -> None:
        rec = self.db.records[node_id]
        self.db.samples.append((now, node_id, utilization, connected))
        rec.samples_total += 1
        if connected:
            rec.samples_up += 1
            if rec.up_since is None:
                rec.up_since = now
        elif rec.up_since is not None:
            rec.up_intervals.append((rec.up_since, now))
            rec.up_since = None
        if rec.kind.churns:
            if len(rec.up_intervals) >= 2:
                total = sum(end - start for start, end in rec.up_intervals)
                rec.predicted_lifetime_ms = total / len(rec.up_intervals) / 1000.0
            else:
                rec.predicted_lifetime_ms = rec.configured_lifetime_ms
