"""Zone topology and the three-tier one-way latency model."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .engine import RngStream

CLOUD_ID = "cloud"


class LatencyTier(enum.IntEnum):
    # Values double as the scheduling preference rank.
    INTRA_ZONE = 0
    INTER_ZONE = 1
    DEVICE_TO_CLOUD = 2


class UnknownNodeError(LookupError):
    pass


@dataclass(frozen=True)
class TierParams:
    mean_ms: float
    deviation_ms: float

    def __post_init__(self) -> None:
        if not self.mean_ms > 0:
            raise ValueError("latency mean must be positive")
        if not self.deviation_ms >= 0:
            raise ValueError("latency deviation must be non-negative")


@dataclass(frozen=True)
class LatencyModel:
    """Per-tier normal latency, truncated at zero by re-sampling.

    ``spread_is`` selects how the configured spread values are read:
    ``"stddev"`` uses them directly as standard deviations, ``"variance"``
    takes their square root.
    """

    intra_zone: TierParams = TierParams(5.0, 2.0)
    inter_zone: TierParams = TierParams(10.0, 3.0)
    device_to_cloud: TierParams = TierParams(50.0, 6.0)
    spread_is: str = "stddev"

    def __post_init__(self) -> None:
        if self.spread_is not in ("stddev", "variance"):
            raise ValueError("spread_is must be 'stddev' or 'variance'")

    def params(self, tier: LatencyTier) -> tuple[float, float]:
        p = (self.intra_zone, self.inter_zone, self.device_to_cloud)[tier]
        sd = p.deviation_ms if self.spread_is == "stddev" else math.sqrt(p.deviation_ms)
        return p.mean_ms, sd


def sample_one_way_latency(model: LatencyModel, tier: LatencyTier, rng: RngStream) -> float:
    """One-way latency in ms for a message crossing ``tier``."""
    mean, sd = model.params(tier)
    while True:
        x = mean + sd * rng.normal()
        if x >= 0.0:
            return x


def transfer_time(payload_bytes: int, bandwidth_bytes_per_s: float) -> float:
    """Serialization delay in ms; zero for empty payloads or infinite bandwidth."""
    if payload_bytes == 0 or math.isinf(bandwidth_bytes_per_s):
        return 0.0
    if bandwidth_bytes_per_s <= 0:
        raise ValueError("bandwidth must be positive")
    return payload_bytes / bandwidth_bytes_per_s * 1000.0


@dataclass
class Zone:
    zone_id: int
    members: list[str] = field(default_factory=list)


@dataclass
class Topology:
    """Zone placement of every non-cloud node plus the attachment tree.

    ``parent`` maps each node to the node it hangs off; the cloud is the
    root and has no entry.
    """

    zones: dict[int, Zone] = field(default_factory=dict)
    placement: dict[str, int] = field(default_factory=dict)
    parent: dict[str, str] = field(default_factory=dict)

    def add(self, node_id: str, zone_id: int | None, parent: str | None = None) -> None:
        if node_id == CLOUD_ID:
            return
        if node_id in self.placement:
            raise ValueError(f"node {node_id!r} already placed")
        self.zones.setdefault(zone_id, Zone(zone_id)).members.append(node_id)
        self.placement[node_id] = zone_id
        if parent is not None:
            self.parent[node_id] = parent

    def zone_of(self, node_id: str) -> int | None:
        if node_id == CLOUD_ID:
            return None
        try:
            return self.placement[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def attach(self, node_id: str, parent: str) -> None:
        self.zone_of(node_id)
        if parent != CLOUD_ID:
            self.zone_of(parent)
        self.parent[node_id] = parent

    def is_tree(self) -> bool:
        """Every placed node reaches the cloud without revisiting a node."""
        for node in self.placement:
            seen = set()
            cur = node
            while cur != CLOUD_ID:
                if cur in seen or cur not in self.parent:
                    return False
                seen.add(cur)
                cur = self.parent[cur]
        return True


def classify(src: str, dst: str, topo: Topology) -> LatencyTier:
    zs = topo.zone_of(src)
    zd = topo.zone_of(dst)
    if src == CLOUD_ID or dst == CLOUD_ID:
        return LatencyTier.DEVICE_TO_CLOUD
    if zs == zd:
        return LatencyTier.INTRA_ZONE
    return LatencyTier.INTER_ZONE
